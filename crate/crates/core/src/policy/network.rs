use super::{LocalMode, PolicyParams};
use crate::autodiff::{Mat, Tape, Var};
use crate::consequences::{ConsequenceTable, SUMMARY_DIM};
use crate::error::{contract, Result};
use crate::instances::{RoutingInstance, Task};
use crate::mdp::{ConstructionState, RoutingEnv};

const KNN: usize = 3;

pub(crate) fn node_feature_dim(task: Task) -> usize {
    match task {
        Task::Tsp => 3,
        Task::Cvrp => 4,
        Task::Cvrptw => 6,
    }
}

pub(crate) fn context_scalars() -> usize {
    3
}

/// Static encoder inputs. Coordinates are mapped into the unit square by the
/// bounding box (aspect preserved). Returns the per-node matrix (all nodes for
/// TSP, customers only otherwise) and the depot's `[x, y]` row.
pub fn node_features(inst: &RoutingInstance) -> (Mat, Option<Mat>) {
    let n = inst.num_nodes();
    let pts: Vec<[f64; 2]> = (0..n).map(|i| inst.position(i)).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in &pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let span = if span > 0.0 { span } else { 1.0 };
    let norm: Vec<[f64; 2]> = pts
        .iter()
        .map(|p| [(p[0] - lo[0]) / span, (p[1] - lo[1]) / span])
        .collect();

    let knn = |i: usize| -> f64 {
        let mut d: Vec<f64> = (0..n)
            .filter(|&j| j != i)
            .map(|j| ((norm[i][0] - norm[j][0]).powi(2) + (norm[i][1] - norm[j][1]).powi(2)).sqrt())
            .collect();
        if d.is_empty() {
            return 0.0;
        }
        d.sort_by(f64::total_cmp);
        let k = KNN.min(d.len());
        d[..k].iter().sum::<f64>() / k as f64
    };

    let f = node_feature_dim(inst.task);
    match inst.task {
        Task::Tsp => {
            let data = (0..n).flat_map(|i| [norm[i][0], norm[i][1], knn(i)]).collect();
            (Mat::from_vec(n, f, data), None)
        }
        Task::Cvrp => {
            let cap = inst.capacity_or_inf();
            let data = (1..n)
                .flat_map(|i| [norm[i][0], norm[i][1], inst.customer(i).demand / cap, knn(i)])
                .collect();
            (Mat::from_vec(n - 1, f, data), Some(Mat::row_vector(norm[0].to_vec())))
        }
        Task::Cvrptw => {
            let cap = inst.capacity_or_inf();
            let t = inst.horizon_or_inf();
            let data = (1..n)
                .flat_map(|i| {
                    let c = inst.customer(i);
                    [
                        norm[i][0],
                        norm[i][1],
                        c.demand / cap,
                        c.window_open / t,
                        c.window_close / t,
                        c.service_time / t,
                    ]
                })
                .collect();
            (Mat::from_vec(n - 1, f, data), Some(Mat::row_vector(norm[0].to_vec())))
        }
    }
}

/// Per-instance encoder outputs living on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Encoded {
    /// `N × d` node embeddings, node 0 first.
    pub emb: Var,
    /// `N × d` keys, state independent.
    pub keys: Var,
    /// `1 × d` graph mean embedding.
    pub mean: Var,
}

/// Intermediate quantities of one scoring step.
#[derive(Debug, Clone)]
pub struct StepEval {
    /// Action ids matching the logit columns.
    pub actions: Vec<usize>,
    /// `1 × m` final logits.
    pub logits: Var,
    pub h: Var,
    pub h_tilde: Var,
    pub gamma: Var,
    pub beta: Var,
    pub alpha: Var,
    /// `1 × m` base matching term `⟨h, k_j⟩` (before scaling by α).
    pub base: Var,
    /// `1 × m` local term, if enabled.
    pub local: Option<Var>,
    /// `1 × p` shared comparator weight `W_φᵀ h̃`, for the linear variants.
    pub v: Option<Var>,
}

/// A tape with every parameter registered as a leaf.
pub struct Forward<'p> {
    pub params: &'p PolicyParams,
    pub tape: Tape,
    /// Whether logits are clipped; starts from the config flag.
    pub clip: bool,
    vars: Vec<Var>,
}

impl<'p> Forward<'p> {
    pub fn new(params: &'p PolicyParams) -> Self {
        let mut tape = Tape::new();
        let vars = params
            .slots
            .iter()
            .map(|s| {
                let data = params.data[s.offset..s.offset + s.len()].to_vec();
                tape.param(Mat::from_vec(s.rows, s.cols, data), s.offset)
            })
            .collect();
        Self {
            params,
            tape,
            clip: params.config.clip_logits,
            vars,
        }
    }

    pub fn param(&self, name: &str) -> Var {
        self.vars[self.params.slot_index(name)]
    }

    fn linear(&mut self, x: Var, prefix: &str) -> Var {
        let w = self.param(&format!("{prefix}_w"));
        let b = self.param(&format!("{prefix}_b"));
        let y = self.tape.matmul(x, w);
        self.tape.add_row(y, b)
    }

    /// Two-layer perceptron with a tanh hidden layer.
    fn mlp(&mut self, x: Var, prefix: &str) -> Var {
        let h = self.linear(x, &format!("{prefix}.l1"));
        let h = self.tape.tanh(h);
        self.linear(h, &format!("{prefix}.l2"))
    }

    pub fn encode(&mut self, inst: &RoutingInstance) -> Encoded {
        let cfg = &self.params.config;
        let (layers, mixer) = (cfg.layers, cfg.depth_mixer);
        let (feat, depot) = node_features(inst);
        let feat = self.tape.constant(feat);
        let nodes = self.linear(feat, "node_embed");
        let x0 = match depot {
            Some(dep) => {
                let dep = self.tape.constant(dep);
                let dep = self.linear(dep, "depot_embed");
                self.tape.concat_rows(&[dep, nodes])
            }
            None => nodes,
        };
        let mut outputs = vec![x0];
        for l in 0..layers {
            let input = if mixer {
                self.depth_mix(&outputs, l)
            } else {
                *outputs.last().expect("at least the input embedding")
            };
            let out = self.attention_layer(input, l);
            outputs.push(out);
        }
        let emb = *outputs.last().expect("non-empty");
        let key_w = self.param("key_w");
        let keys = self.tape.matmul(emb, key_w);
        let mean = self.tape.mean_rows(emb);
        Encoded { emb, keys, mean }
    }

    /// Softmax over depth of normalized earlier outputs, per node.
    fn depth_mix(&mut self, outputs: &[Var], l: usize) -> Var {
        let q = self.param(&format!("layer{l}.depth_q"));
        let normed: Vec<Var> = outputs.iter().map(|&v| self.tape.norm_rows(v)).collect();
        let scores: Vec<Var> = normed.iter().map(|&v| self.tape.matmul(v, q)).collect();
        let s = self.tape.concat_cols(&scores);
        let w = self.tape.softmax_rows(s);
        let mut acc: Option<Var> = None;
        for (m, &v) in normed.iter().enumerate() {
            let wm = self.tape.slice_cols(w, m, 1);
            let term = self.tape.mul_col(v, wm);
            acc = Some(match acc {
                Some(a) => self.tape.add(a, term),
                None => term,
            });
        }
        acc.expect("non-empty depth set")
    }

    fn attention_layer(&mut self, x: Var, l: usize) -> Var {
        let cfg = self.params.config.clone();
        let (d, heads) = (cfg.d_model, cfg.heads);
        let dh = d / heads;
        let [wq, wk, wv, wo] = ["wq", "wk", "wv", "wo"].map(|m| self.param(&format!("layer{l}.{m}")));
        let q = self.tape.matmul(x, wq);
        let k = self.tape.matmul(x, wk);
        let v = self.tape.matmul(x, wv);
        let scale = 1.0 / (dh as f64).sqrt();
        let mut head_out = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.tape.slice_cols(q, h * dh, dh);
            let kh = self.tape.slice_cols(k, h * dh, dh);
            let vh = self.tape.slice_cols(v, h * dh, dh);
            let s = self.tape.matmul_bt(qh, kh);
            let s = self.tape.scale(s, scale);
            let a = self.tape.softmax_rows(s);
            head_out.push(self.tape.matmul(a, vh));
        }
        let mut o = self.tape.concat_cols(&head_out);
        if cfg.gate_attn {
            // g = 2σ(W_g x + b_g) per head, blended as o ⊙ (1 − λ + λg)
            let g = self.linear(x, &format!("layer{l}.gate"));
            let g = self.tape.sigmoid(g);
            let g = self.tape.scale(g, 2.0);
            let mut expand = Mat::zeros(heads, d);
            for h in 0..heads {
                for i in 0..dh {
                    expand.data[h * d + h * dh + i] = 1.0;
                }
            }
            let expand = self.tape.constant(expand);
            let g = self.tape.matmul(g, expand);
            let g = self.tape.scale(g, cfg.gate_lambda);
            let g = self.tape.add_const(g, 1.0 - cfg.gate_lambda);
            o = self.tape.mul(o, g);
        }
        let att = self.tape.matmul(o, wo);
        let z = self.tape.add(x, att);
        let z = self.tape.norm_rows(z);
        let f = self.linear(z, &format!("layer{l}.ff1"));
        let f = self.tape.gelu(f);
        let f = self.linear(f, &format!("layer{l}.ff2"));
        let y = self.tape.add(z, f);
        self.tape.norm_rows(y)
    }

    /// Context projection `h_t`.
    pub fn context(&mut self, enc: &Encoded, env: &RoutingEnv, state: &ConstructionState, code: &[f64]) -> Var {
        let cfg = &self.params.config;
        assert_eq!(code.len(), cfg.code_dim, "rollout code width mismatch");
        let cap_ratio = if env.task().has_capacity() {
            state.remaining_capacity / env.capacity()
        } else {
            1.0
        };
        let time = if env.task().has_time() {
            state.time / env.horizon()
        } else {
            0.0
        };
        let visited = state.visited_customers as f64 / env.num_customers().max(1) as f64;
        let cur = self.tape.gather_rows(enc.emb, &[state.current]);
        let scal = self.tape.constant(Mat::row_vector(vec![cap_ratio, time, visited]));
        let code = self.tape.constant(Mat::row_vector(code.to_vec()));
        let ctx = self.tape.concat_cols(&[enc.mean, cur, scal, code]);
        self.linear(ctx, "context")
    }

    /// Scores every action of `table`. `morph` blends with reference logits
    /// `(u_ref, λ)` before the optional clip.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        enc: &Encoded,
        env: &RoutingEnv,
        state: &ConstructionState,
        table: &ConsequenceTable,
        summary: &[f64; SUMMARY_DIM],
        code: &[f64],
        morph: Option<(&[f64], f64)>,
    ) -> Result<StepEval> {
        let cfg = self.params.config.clone();
        let actions = table.actions();
        let m = actions.len();
        if m == 0 {
            return Err(contract("scoring step with no feasible action"));
        }
        let h = self.context(enc, env, state, code);
        let keys = self.tape.gather_rows(enc.keys, &actions);
        let base = self.tape.matmul_bt(h, keys);

        let r = if cfg.summary {
            summary.to_vec()
        } else {
            vec![0.0; SUMMARY_DIM]
        };
        let r = self.tape.constant(Mat::row_vector(r));
        let hr = self.tape.concat_cols(&[h, r]);
        let gamma = self.mlp(hr, "gamma");
        let gamma = self.tape.tanh(gamma);
        let beta = self.mlp(hr, "beta");
        let alpha = self.mlp(hr, "alpha");
        let alpha = self.tape.sigmoid(alpha);
        let one_plus = self.tape.add_const(gamma, 1.0);
        let ht = self.tape.mul(h, one_plus);
        let ht = self.tape.add(ht, beta);

        let mut u = self.tape.scale_by(base, alpha);
        let (mut local, mut v) = (None, None);
        if cfg.local != LocalMode::Off {
            let (width, phi) = table.phi(cfg.local.centered());
            if phi.len() != m * width {
                return Err(contract("feature table does not match the action list"));
            }
            let phi = self.tape.constant(Mat::from_vec(m, width, phi));
            let term = match cfg.local {
                LocalMode::Centered | LocalMode::RawLinear => {
                    let w_phi = self.param("w_phi");
                    let vt = self.tape.matmul(ht, w_phi);
                    v = Some(vt);
                    self.tape.matmul_bt(vt, phi)
                }
                _ => {
                    let rep = self.tape.repeat_rows(ht, m);
                    let x = self.tape.concat_cols(&[rep, phi]);
                    let hid = self.linear(x, "cand.l1");
                    let hid = self.tape.gelu(hid);
                    let o = self.linear(hid, "cand.l2");
                    self.tape.transpose(o)
                }
            };
            local = Some(term);
            u = self.tape.add(u, term);
        }
        if let Some((u_ref, lambda)) = morph {
            if u_ref.len() != m {
                return Err(contract("reference logits do not match the action list"));
            }
            let scaled = self.tape.scale(u, lambda);
            let rest = self
                .tape
                .constant(Mat::row_vector(u_ref.iter().map(|x| (1.0 - lambda) * x).collect()));
            u = self.tape.add(scaled, rest);
        }
        if self.clip {
            let c = cfg.clip_c;
            let s = self.tape.scale(u, 1.0 / c);
            let t = self.tape.tanh(s);
            u = self.tape.scale(t, c);
        }
        Ok(StepEval {
            actions,
            logits: u,
            h,
            h_tilde: ht,
            gamma,
            beta,
            alpha,
            base,
            local,
            v,
        })
    }
}
