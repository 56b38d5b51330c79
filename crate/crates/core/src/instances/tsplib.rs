use super::{CustomerRecord, DistanceRule, RoutingInstance, Task};
use crate::error::{Error, Result};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn split_header(line: &str) -> Option<(String, String)> {
    let (k, v) = line.split_once(':')?;
    Some((k.trim().to_ascii_uppercase(), v.trim().to_string()))
}

/// Parses a TSPLIB `EUC_2D` TSP document. The first node becomes the start
/// node (node 0); distances use the rounded `nint` convention.
pub fn parse_tsplib(text: &str) -> Result<RoutingInstance> {
    let mut name = String::new();
    let mut dimension: Option<usize> = None;
    let mut edge_type: Option<String> = None;
    let mut coords: Vec<[f64; 2]> = Vec::new();
    let mut in_coords = false;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "EOF" {
            break;
        }
        if in_coords {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 3 {
                if line.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                    // Another section follows; coordinates are complete.
                    in_coords = false;
                    continue;
                }
                return Err(parse_err(line_no, "expected `id x y` in NODE_COORD_SECTION"));
            }
            let mut v = [0.0; 3];
            for (slot, f) in v.iter_mut().zip(&fields) {
                *slot = f
                    .parse()
                    .map_err(|_| parse_err(line_no, format!("non-numeric field `{f}`")))?;
            }
            coords.push([v[1], v[2]]);
            continue;
        }
        if line.to_ascii_uppercase().starts_with("NODE_COORD_SECTION") {
            match edge_type.as_deref() {
                Some("EUC_2D") => {}
                Some(other) => {
                    return Err(Error::UnsupportedFormat(format!(
                        "EDGE_WEIGHT_TYPE {other} (only EUC_2D is supported)"
                    )))
                }
                None => return Err(parse_err(line_no, "EDGE_WEIGHT_TYPE missing before coordinates")),
            }
            in_coords = true;
            continue;
        }
        if let Some((key, value)) = split_header(line) {
            match key.as_str() {
                "NAME" => name = value,
                "TYPE" => {
                    if !value.eq_ignore_ascii_case("TSP") {
                        return Err(Error::UnsupportedFormat(format!("TYPE {value}")));
                    }
                }
                "DIMENSION" => {
                    dimension = Some(
                        value
                            .parse()
                            .map_err(|_| parse_err(line_no, "DIMENSION is not an integer"))?,
                    )
                }
                "EDGE_WEIGHT_TYPE" => {
                    let v = value.to_ascii_uppercase();
                    if v != "EUC_2D" {
                        return Err(Error::UnsupportedFormat(format!(
                            "EDGE_WEIGHT_TYPE {value} (only EUC_2D is supported)"
                        )));
                    }
                    edge_type = Some(v);
                }
                _ => {}
            }
        } else if line.to_ascii_uppercase().ends_with("_SECTION") {
            return Err(Error::UnsupportedFormat(format!("section {line}")));
        }
    }

    if edge_type.is_none() {
        return Err(Error::UnsupportedFormat("EDGE_WEIGHT_TYPE missing".into()));
    }
    if coords.is_empty() {
        return Err(parse_err(text.lines().count(), "NODE_COORD_SECTION missing or empty"));
    }
    if let Some(dim) = dimension {
        if dim != coords.len() {
            return Err(parse_err(
                text.lines().count(),
                format!("DIMENSION {dim} but {} coordinates", coords.len()),
            ));
        }
    }
    if coords.len() < 2 {
        return Err(Error::InvalidInstance("TSP needs at least two nodes".into()));
    }
    let depot = coords[0];
    let customers = coords[1..].iter().map(|&p| CustomerRecord::at(p)).collect();
    Ok(RoutingInstance {
        task: Task::Tsp,
        depot,
        customers,
        capacity: None,
        horizon: None,
        distance_rule: DistanceRule::Euc2dRounded,
        name,
        time_factor: 1.0,
        spatial_scale: None,
    })
}

/// Parses a TSPLIB `TOUR_SECTION` into 0-based node ids.
pub fn parse_tsplib_tour(text: &str) -> Result<Vec<usize>> {
    let mut tour = Vec::new();
    let mut inside = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.eq_ignore_ascii_case("TOUR_SECTION") {
            inside = true;
            continue;
        }
        if !inside {
            continue;
        }
        for f in line.split_whitespace() {
            let v: i64 = f
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("non-numeric tour entry `{f}`")))?;
            if v == -1 {
                return Ok(tour);
            }
            if v < 1 {
                return Err(parse_err(idx + 1, "tour ids are 1-based"));
            }
            tour.push(v as usize - 1);
        }
    }
    if tour.is_empty() {
        return Err(parse_err(text.lines().count(), "TOUR_SECTION missing"));
    }
    Ok(tour)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(edge: &str, body: &str) -> String {
        format!("NAME: t\nTYPE: TSP\nDIMENSION: 2\nEDGE_WEIGHT_TYPE: {edge}\nNODE_COORD_SECTION\n{body}EOF\n")
    }

    #[test]
    fn two_nodes_pythagorean() {
        let inst = parse_tsplib(&doc("EUC_2D", "1 0 0\n2 3 4\n")).unwrap();
        assert_eq!(inst.task, Task::Tsp);
        assert_eq!(inst.num_customers(), 1);
        assert_eq!(inst.distance(0, 1), 5.0);
    }

    #[test]
    fn rounded_distance() {
        let inst = parse_tsplib(&doc("EUC_2D", "1 0 0\n2 1 1\n")).unwrap();
        assert_eq!(inst.distance(0, 1), 1.0);
    }

    #[test]
    fn unsupported_edge_type() {
        let err = parse_tsplib(&doc("GEO", "1 0 0\n2 1 1\n")).unwrap_err();
        assert!(matches!(err, Error::UnsupportedFormat(_)), "{err}");
    }

    #[test]
    fn explicit_matrix_is_unsupported() {
        let text = "NAME: x\nTYPE: TSP\nDIMENSION: 2\nEDGE_WEIGHT_TYPE: EXPLICIT\nEDGE_WEIGHT_SECTION\n0 1\n1 0\nEOF\n";
        assert!(matches!(parse_tsplib(text), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn dimension_mismatch() {
        let text = doc("EUC_2D", "1 0 0\n2 1 1\n3 2 2\n");
        assert!(matches!(parse_tsplib(&text), Err(Error::Parse { .. })));
    }

    #[test]
    fn tour_section() {
        let t = "NAME: a\nTYPE: TOUR\nTOUR_SECTION\n1\n3\n2\n-1\nEOF\n";
        assert_eq!(parse_tsplib_tour(t).unwrap(), vec![0, 2, 1]);
    }
}
