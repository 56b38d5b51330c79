use super::{CustomerRecord, DistanceRule, RoutingInstance, Task};
use crate::error::{Error, Result};

#[derive(PartialEq)]
enum Section {
    Preamble,
    Vehicle,
    Customer,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn numbers(line_no: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|_| parse_err(line_no, format!("non-numeric field `{f}`")))
        })
        .collect()
}

/// Parses a Solomon (or Homberger) VRPTW document.
///
/// Row 0 of the customer section is the depot; its due date becomes the
/// horizon. Distances are kept unrounded.
pub fn parse_solomon(text: &str) -> Result<RoutingInstance> {
    let mut name = None;
    let mut section = Section::Preamble;
    let mut capacity = None;
    let mut depot: Option<([f64; 2], f64)> = None;
    let mut customers = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let upper = line.to_ascii_uppercase();
        if upper.starts_with("VEHICLE") {
            section = Section::Vehicle;
            continue;
        }
        if upper.starts_with("CUSTOMER") {
            if capacity.is_none() {
                return Err(parse_err(line_no, "customer section before vehicle capacity"));
            }
            section = Section::Customer;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        match section {
            Section::Preamble => {
                if name.is_none() {
                    name = Some(line.to_string());
                } else {
                    return Err(parse_err(line_no, "unexpected content before VEHICLE section"));
                }
            }
            Section::Vehicle => {
                if upper.starts_with("NUMBER") {
                    continue;
                }
                if capacity.is_some() {
                    return Err(parse_err(line_no, "extra line in VEHICLE section"));
                }
                if fields.len() != 2 {
                    return Err(parse_err(line_no, "malformed vehicle header, expected NUMBER CAPACITY"));
                }
                let v = numbers(line_no, &fields)?;
                if v[1] <= 0.0 {
                    return Err(parse_err(line_no, "vehicle capacity must be positive"));
                }
                capacity = Some(v[1]);
            }
            Section::Customer => {
                if upper.starts_with("CUST") {
                    continue;
                }
                if fields.len() != 7 {
                    return Err(parse_err(
                        line_no,
                        format!("expected 7 fields in customer row, found {}", fields.len()),
                    ));
                }
                let v = numbers(line_no, &fields)?;
                let id = v[0];
                if depot.is_none() {
                    if id != 0.0 {
                        return Err(parse_err(line_no, "missing depot row (customer 0)"));
                    }
                    depot = Some(([v[1], v[2]], v[5]));
                    continue;
                }
                customers.push(CustomerRecord {
                    position: [v[1], v[2]],
                    demand: v[3],
                    window_open: v[4],
                    window_close: v[5],
                    service_time: v[6],
                });
            }
        }
    }

    let last = text.lines().count().max(1);
    let capacity = capacity.ok_or_else(|| parse_err(last, "missing VEHICLE section"))?;
    let (depot, horizon) = depot.ok_or_else(|| parse_err(last, "missing depot row (customer 0)"))?;
    if customers.is_empty() {
        return Err(Error::InvalidInstance("Solomon file has no customers".into()));
    }
    if horizon <= 0.0 {
        return Err(Error::InvalidInstance("depot due date must be positive".into()));
    }
    Ok(RoutingInstance {
        task: Task::Cvrptw,
        depot,
        customers,
        capacity: Some(capacity),
        horizon: Some(horizon),
        distance_rule: DistanceRule::Exact,
        name: name.unwrap_or_default(),
        time_factor: 1.0,
        spatial_scale: None,
    })
}
