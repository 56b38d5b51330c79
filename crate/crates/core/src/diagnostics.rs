//! Mechanism probes: sensitivity to a shared offset on the relative
//! features, the modulation gate over construction progress, and the
//! effective comparator weights grouped by feasible-set size.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::consequences::{candidate_features, step_summary};
use crate::error::{contract, Result};
use crate::instances::RoutingInstance;
use crate::mdp::RoutingEnv;
use crate::policy::{rollout, DecodeMode, Forward, LocalMode, PolicyParams};

pub const PROBE_OFFSETS: [f64; 5] = [0.0, 0.1, 0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DriftRow {
    pub variant: String,
    pub offset: f64,
    pub steps: usize,
    pub mean_tv: f64,
    pub max_tv: f64,
    pub flips: usize,
}

#[derive(Debug, Clone, Default)]
struct DriftAcc {
    steps: usize,
    tv_sum: f64,
    tv_max: f64,
    flips: usize,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in p.iter().enumerate() {
        if *v > p[best] {
            best = i;
        }
    }
    best
}

fn softmax(u: &[f64]) -> Vec<f64> {
    let lse = crate::autodiff::log_sum_exp(u);
    u.iter().map(|x| (x - lse).exp()).collect()
}

/// Drift of one variant on one instance along its own greedy trajectory.
fn probe_instance(params: &PolicyParams, inst: &RoutingInstance, offsets: &[f64]) -> Result<Vec<DriftAcc>> {
    let env = RoutingEnv::new(inst);
    let mut fwd = Forward::new(params);
    fwd.clip = true;
    let enc = fwd.encode(inst);
    let code = vec![0.0; params.config.code_dim];
    let mut acc = vec![DriftAcc::default(); offsets.len()];
    let mut state = env.initial_state();
    while !env.is_terminal(&state) {
        let mask = env.feasible_actions(&state)?;
        let table = candidate_features(&env, &state, &mask);
        let summary = step_summary(&env, &state, &table);
        let mut probs_at = |t: &crate::consequences::ConsequenceTable| -> Result<(Vec<usize>, Vec<f64>)> {
            let mark = fwd.tape.len();
            let ev = fwd.step(&enc, &env, &state, t, &summary, &code, None)?;
            let p = softmax(&fwd.tape.value(ev.logits).data);
            fwd.tape.truncate(mark);
            Ok((ev.actions, p))
        };
        let (actions, p0) = probs_at(&table)?;
        for (k, &delta) in offsets.iter().enumerate() {
            let shifted = table.with_offset(&vec![delta; table.rel_dim]);
            let (_, p) = probs_at(&shifted)?;
            let tv = 0.5 * p.iter().zip(&p0).map(|(a, b)| (a - b).abs()).sum::<f64>();
            let a = &mut acc[k];
            a.steps += 1;
            a.tv_sum += tv;
            a.tv_max = a.tv_max.max(tv);
            a.flips += usize::from(argmax(&p) != argmax(&p0));
        }
        let best = actions[argmax(&p0)];
        env.step(&mut state, best)?;
    }
    Ok(acc)
}

/// Adds each offset to every relative feature of every action and measures
/// the total-variation change of the clipped policy, for the centered and
/// the raw-linear comparator sharing the same weights.
pub fn translation_probe(
    params: &PolicyParams,
    instances: &[RoutingInstance],
    offsets: &[f64],
) -> Result<Vec<DriftRow>> {
    let mut rows = Vec::new();
    for (name, mode) in [("centered", LocalMode::Centered), ("uncentered", LocalMode::RawLinear)] {
        let mut variant = params.clone();
        variant.config.local = mode;
        let per_instance = instances
            .par_iter()
            .map(|inst| probe_instance(&variant, inst, offsets))
            .collect::<Result<Vec<_>>>()?;
        for (k, &offset) in offsets.iter().enumerate() {
            let mut total = DriftAcc::default();
            for acc in &per_instance {
                total.steps += acc[k].steps;
                total.tv_sum += acc[k].tv_sum;
                total.tv_max = total.tv_max.max(acc[k].tv_max);
                total.flips += acc[k].flips;
            }
            rows.push(DriftRow {
                variant: name.into(),
                offset,
                steps: total.steps,
                mean_tv: total.tv_sum / total.steps.max(1) as f64,
                max_tv: total.tv_max,
                flips: total.flips,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModulationPoint {
    pub progress: f64,
    pub steps: usize,
    pub mean_alpha: f64,
    /// Mean of `|local| / (|α·base| + |local|)`, averaged over actions.
    pub mean_local_share: f64,
}

/// Greedy rollouts binned by the fraction of customers already served.
pub fn modulation_curves(
    params: &PolicyParams,
    instances: &[RoutingInstance],
    bins: usize,
) -> Result<Vec<ModulationPoint>> {
    if bins == 0 {
        return Err(contract("at least one progress bin is required"));
    }
    let records = instances
        .par_iter()
        .map(|inst| {
            let env = RoutingEnv::new(inst);
            let mut fwd = Forward::new(params);
            let enc = fwd.encode(inst);
            let code = vec![0.0; params.config.code_dim];
            rollout(&mut fwd, &enc, &env, &code, DecodeMode::Greedy, None, false, true).map(|o| o.steps)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sums = vec![(0usize, 0.0f64, 0.0f64); bins];
    for step in records.iter().flatten() {
        let b = ((step.progress * bins as f64) as usize).min(bins - 1);
        let mut share = 0.0;
        for (k, base) in step.base.iter().enumerate() {
            let g = (step.alpha * base).abs();
            let l = step.local.as_ref().map_or(0.0, |l| l[k].abs());
            share += if g + l > 0.0 { l / (g + l) } else { 0.0 };
        }
        share /= step.base.len().max(1) as f64;
        let s = &mut sums[b];
        s.0 += 1;
        s.1 += step.alpha;
        s.2 += share;
    }
    Ok(sums
        .iter()
        .enumerate()
        .filter(|(_, s)| s.0 > 0)
        .map(|(b, s)| ModulationPoint {
            progress: (b as f64 + 0.5) / bins as f64,
            steps: s.0,
            mean_alpha: s.1 / s.0 as f64,
            mean_local_share: s.2 / s.0 as f64,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightGroup {
    /// Inclusive range of feasible customer counts.
    pub min_size: usize,
    pub max_size: usize,
    pub steps: usize,
    /// Mean `|v_t|` per feature dimension.
    pub mean_abs_weight: Vec<f64>,
}

fn bucket(size: usize) -> (usize, usize) {
    if size <= 1 {
        return (size, size);
    }
    let lo = 1usize << (usize::BITS - 1 - size.leading_zeros());
    (lo, 2 * lo - 1)
}

/// Mean absolute effective comparator weight `v_t = W_φᵀh̃_t`, grouped by
/// feasible-set size in power-of-two buckets. Requires a linear comparator.
pub fn feature_weight_groups(params: &PolicyParams, instances: &[RoutingInstance]) -> Result<Vec<WeightGroup>> {
    if !matches!(params.config.local, LocalMode::Centered | LocalMode::RawLinear) {
        return Err(contract("feature weights are defined for the linear comparator only"));
    }
    let records = instances
        .par_iter()
        .map(|inst| {
            let env = RoutingEnv::new(inst);
            let mut fwd = Forward::new(params);
            let enc = fwd.encode(inst);
            let code = vec![0.0; params.config.code_dim];
            rollout(&mut fwd, &enc, &env, &code, DecodeMode::Greedy, None, false, true).map(|o| o.steps)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut groups: Vec<WeightGroup> = Vec::new();
    for step in records.iter().flatten() {
        let Some(v) = &step.v else { continue };
        let (lo, hi) = bucket(step.feasible_customers);
        let g = match groups.iter_mut().position(|g| g.min_size == lo) {
            Some(i) => &mut groups[i],
            None => {
                groups.push(WeightGroup {
                    min_size: lo,
                    max_size: hi,
                    steps: 0,
                    mean_abs_weight: vec![0.0; v.len()],
                });
                groups.last_mut().expect("just pushed")
            }
        };
        g.steps += 1;
        for (m, x) in g.mean_abs_weight.iter_mut().zip(v) {
            *m += x.abs();
        }
    }
    for g in &mut groups {
        for m in &mut g.mean_abs_weight {
            *m /= g.steps as f64;
        }
    }
    groups.sort_by_key(|g| g.min_size);
    Ok(groups)
}

pub fn write_drift_csv<W: Write>(rows: &[DriftRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_modulation_csv<W: Write>(points: &[ModulationPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for p in points {
        w.serialize(p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_weight_groups_csv<W: Write>(groups: &[WeightGroup], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dims = groups.first().map_or(0, |g| g.mean_abs_weight.len());
    let mut header = vec!["min_size".to_string(), "max_size".into(), "steps".into()];
    header.extend((0..dims).map(|k| format!("w{k}")));
    w.write_record(&header)?;
    for g in groups {
        let mut rec = vec![g.min_size.to_string(), g.max_size.to_string(), g.steps.to_string()];
        rec.extend(g.mean_abs_weight.iter().map(|x| format!("{x:.8}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

const W: f64 = 640.0;
const H: f64 = 360.0;
const PAD: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

fn svg_open(title: &str) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        s,
        "<text x=\"{PAD}\" y=\"20\" font-size=\"13\" font-family=\"sans-serif\">{title}</text>"
    );
    let _ = writeln!(
        s,
        "<polyline points=\"{PAD},{PAD} {PAD},{y} {x},{y}\" fill=\"none\" stroke=\"black\"/>",
        y = H - PAD,
        x = W - PAD
    );
    s
}

/// Line plot of `α_t` and local share against progress, both on `[0, 1]`.
pub fn modulation_svg(points: &[ModulationPoint]) -> String {
    let mut s = svg_open("gate and local share vs progress");
    let sx = |x: f64| PAD + x * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - y.clamp(0.0, 1.0) * (H - 2.0 * PAD);
    for (k, (label, get)) in [
        (
            "alpha",
            (|p: &ModulationPoint| p.mean_alpha) as fn(&ModulationPoint) -> f64,
        ),
        ("local share", |p: &ModulationPoint| p.mean_local_share),
    ]
    .into_iter()
    .enumerate()
    {
        let pts: Vec<String> = points
            .iter()
            .map(|p| format!("{:.1},{:.1}", sx(p.progress), sy(get(p))))
            .collect();
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>",
            pts.join(" "),
            COLORS[k]
        );
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-size=\"11\" fill=\"{}\" font-family=\"sans-serif\">{label}</text>",
            W - PAD - 80.0,
            PAD + 14.0 * k as f64,
            COLORS[k]
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Grouped bar chart: one group per size bucket, one bar per feature.
pub fn weight_groups_svg(groups: &[WeightGroup]) -> String {
    let mut s = svg_open("mean |v| by feasible-set size");
    let dims = groups.first().map_or(0, |g| g.mean_abs_weight.len());
    let max = groups
        .iter()
        .flat_map(|g| g.mean_abs_weight.iter().copied())
        .fold(0.0f64, f64::max)
        .max(1e-12);
    let group_w = (W - 2.0 * PAD) / groups.len().max(1) as f64;
    let bar_w = group_w * 0.8 / dims.max(1) as f64;
    for (gi, g) in groups.iter().enumerate() {
        let x0 = PAD + gi as f64 * group_w + group_w * 0.1;
        for (k, v) in g.mean_abs_weight.iter().enumerate() {
            let h = v / max * (H - 2.0 * PAD);
            let _ = writeln!(
                s,
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>",
                x0 + k as f64 * bar_w,
                H - PAD - h,
                bar_w,
                h,
                COLORS[k % COLORS.len()]
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{:.1}\" y=\"{}\" font-size=\"11\" font-family=\"sans-serif\">{}-{}</text>",
            x0,
            H - PAD + 14.0,
            g.min_size,
            g.max_size
        );
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{generate_cvrptw, LatentPrior, Task};
    use crate::policy::PolicyConfig;

    fn instances() -> Vec<RoutingInstance> {
        (0..3)
            .map(|s| generate_cvrptw(&LatentPrior::default().sample(s), 8).unwrap())
            .collect()
    }

    #[test]
    fn centered_variant_is_offset_invariant() {
        let params = PolicyParams::new(PolicyConfig::small(Task::Cvrptw, 8), 4).unwrap();
        let rows = translation_probe(&params, &instances(), &PROBE_OFFSETS).unwrap();
        assert_eq!(rows.len(), 10);
        for r in &rows {
            assert!(r.steps > 0);
            if r.variant == "centered" || r.offset == 0.0 {
                assert!(r.max_tv <= 1e-12, "{r:?}");
                assert_eq!(r.flips, 0);
            }
        }
        assert!(rows.iter().any(|r| r.variant == "uncentered" && r.max_tv > 0.0));
    }

    #[test]
    fn zero_policy_gate_is_flat() {
        let params = PolicyParams::zeros(PolicyConfig::small(Task::Cvrptw, 8)).unwrap();
        let curve = modulation_curves(&params, &instances(), 5).unwrap();
        assert!(!curve.is_empty());
        assert!(curve.iter().all(|p| p.mean_alpha == 0.5));
        let groups = feature_weight_groups(&params, &instances()).unwrap();
        assert!(groups.iter().all(|g| g.mean_abs_weight.iter().all(|w| *w == 0.0)));
        assert!(modulation_svg(&curve).contains("<polyline"));
        assert!(weight_groups_svg(&groups).contains("<rect"));
    }

    #[test]
    fn buckets_are_powers_of_two() {
        assert_eq!(bucket(0), (0, 0));
        assert_eq!(bucket(1), (1, 1));
        assert_eq!(bucket(3), (2, 3));
        assert_eq!(bucket(8), (8, 15));
    }
}
