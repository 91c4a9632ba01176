//! LP-format export of the min-max routing integer program, for inspection
//! or for feeding an external solver.
//!
//! Variables: binary arc indicators `x_i_j_k` (responder `i`, 1-based; from
//! node `j`, 0 = start; to victim node `k`), integer visit-order variables
//! `u_i_j`, and one continuous auxiliary `T` bounding every route's cost.
//! Self-loop arcs (`j == k`) are emitted for layout completeness; their
//! ordering constraints force them to zero.

use std::fmt::Write;

use crate::domain::Instance;

use super::SolveError;

/// Render the routing problem for `instance` as an LP-format document.
pub fn build_ilp_text(instance: &Instance) -> Result<String, SolveError> {
    let n = instance.n_responders();
    let m = instance.n_victims();
    if m == 0 {
        return Err(SolveError::EmptyInstance);
    }
    let d = instance.distance_matrix();
    let mut out = String::new();
    let w = &mut out;

    writeln!(w, "\\ min-max victim tagging routes: {n} responders, {m} victims").unwrap();
    writeln!(w, "Minimize").unwrap();
    writeln!(w, " obj: T").unwrap();
    writeln!(w, "Subject To").unwrap();

    // Every route's cost is bounded by the objective variable.
    for i in 1..=n {
        let spec = instance.responders[i - 1];
        write!(w, " route_time_{i}:").unwrap();
        for j in 0..=m {
            for k in 1..=m {
                let coef = d.get(j, k) / spec.speed + f64::from(spec.tag_time);
                write!(w, " + {coef:.10} x_{i}_{j}_{k}").unwrap();
            }
        }
        writeln!(w, " - T <= 0").unwrap();
    }

    // No more start departures than responders.
    write!(w, " start_departures:").unwrap();
    for i in 1..=n {
        for k in 1..=m {
            write!(w, " + x_{i}_0_{k}").unwrap();
        }
    }
    writeln!(w, " <= {n}").unwrap();

    // Each victim is tagged exactly once.
    for k in 1..=m {
        write!(w, " tag_once_{k}:").unwrap();
        for i in 1..=n {
            for j in 0..=m {
                write!(w, " + x_{i}_{j}_{k}").unwrap();
            }
        }
        writeln!(w, " = 1").unwrap();
    }

    // Each victim is left at most once.
    for j in 1..=m {
        write!(w, " leave_once_{j}:").unwrap();
        for i in 1..=n {
            for k in 1..=m {
                write!(w, " + x_{i}_{j}_{k}").unwrap();
            }
        }
        writeln!(w, " <= 1").unwrap();
    }

    // Route lengths cannot exceed the victim count.
    for i in 1..=n {
        write!(w, " route_len_{i}:").unwrap();
        for j in 0..=m {
            for k in 1..=m {
                write!(w, " + x_{i}_{j}_{k}").unwrap();
            }
        }
        writeln!(w, " <= {m}").unwrap();
    }

    // Only the responder that tags a victim may leave it.
    for i in 1..=n {
        for k in 1..=m {
            write!(w, " leaver_tags_{i}_{k}:").unwrap();
            for j in 0..=m {
                write!(w, " + x_{i}_{j}_{k}").unwrap();
            }
            for a in 1..=n {
                if a == i {
                    continue;
                }
                for b in 1..=m {
                    write!(w, " + x_{a}_{k}_{b}").unwrap();
                }
            }
            writeln!(w, " <= 1").unwrap();
        }
    }

    // Visit order increases along every used arc between victim nodes,
    // which rules out subtours; the j == k case pins self-loops to zero.
    for i in 1..=n {
        for j in 1..=m {
            for k in 1..=m {
                if j == k {
                    writeln!(w, " order_{i}_{j}_{k}: {m} x_{i}_{j}_{k} <= {}", m - 1).unwrap();
                } else {
                    writeln!(
                        w,
                        " order_{i}_{j}_{k}: u_{i}_{j} - u_{i}_{k} + {m} x_{i}_{j}_{k} <= {}",
                        m - 1
                    )
                    .unwrap();
                }
            }
        }
    }

    writeln!(w, "Bounds").unwrap();
    for i in 1..=n {
        writeln!(w, " u_{i}_0 = 0").unwrap();
        for j in 1..=m {
            writeln!(w, " 1 <= u_{i}_{j} <= {m}").unwrap();
        }
    }

    writeln!(w, "Binaries").unwrap();
    for i in 1..=n {
        for j in 0..=m {
            for k in 1..=m {
                writeln!(w, " x_{i}_{j}_{k}").unwrap();
            }
        }
    }

    writeln!(w, "Generals").unwrap();
    for i in 1..=n {
        for j in 0..=m {
            writeln!(w, " u_{i}_{j}").unwrap();
        }
    }

    writeln!(w, "End").unwrap();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{generate_instance, Point, ResponderSpec, ScenarioConfig, VictimSpec};
    use crate::domain::Instance;

    fn section_lines<'a>(text: &'a str, section: &str) -> Vec<&'a str> {
        let mut lines = Vec::new();
        let mut inside = false;
        for line in text.lines() {
            let trimmed = line.trim();
            if trimmed == section {
                inside = true;
                continue;
            }
            if inside {
                if matches!(trimmed, "Subject To" | "Bounds" | "Binaries" | "Generals" | "End") {
                    break;
                }
                lines.push(trimmed);
            }
        }
        lines
    }

    #[test]
    fn variable_counts_match_the_formulation() {
        let config = ScenarioConfig::new(2, 3, 40.0, 25.0);
        let inst = generate_instance(&config, 1).unwrap();
        let text = build_ilp_text(&inst).unwrap();
        // n (m+1) m arc indicators, n (m+1) order variables, one auxiliary.
        assert_eq!(section_lines(&text, "Binaries").len(), 2 * 4 * 3);
        assert_eq!(section_lines(&text, "Generals").len(), 2 * 4);
        assert_eq!(section_lines(&text, "Minimize"), vec!["obj: T"]);
    }

    #[test]
    fn smallest_problem_has_two_arc_variables() {
        let inst = Instance::new(
            10.0,
            10.0,
            Point::new(0.0, 0.0),
            vec![ResponderSpec { id: 0, speed: 1.0, tag_time: 3 }],
            vec![VictimSpec { id: 0, position: Point::new(5.0, 0.0), health: 0.5 }],
            0,
        )
        .unwrap();
        let text = build_ilp_text(&inst).unwrap();
        let binaries = section_lines(&text, "Binaries");
        assert_eq!(binaries, vec!["x_1_0_1", "x_1_1_1"]);
        assert_eq!(section_lines(&text, "Generals"), vec!["u_1_0", "u_1_1"]);
        // The self-loop is pinned to zero by its ordering constraint.
        assert!(text.contains("order_1_1_1: 1 x_1_1_1 <= 0"));
    }

    #[test]
    fn coefficients_carry_travel_plus_tag_time() {
        let inst = Instance::new(
            10.0,
            10.0,
            Point::new(0.0, 0.0),
            vec![ResponderSpec { id: 0, speed: 2.0, tag_time: 3 }],
            vec![VictimSpec { id: 0, position: Point::new(8.0, 0.0), health: 0.5 }],
            0,
        )
        .unwrap();
        let text = build_ilp_text(&inst).unwrap();
        // 8 units at speed 2 plus tag time 3 = 7.
        assert!(text.contains("7.0000000000 x_1_0_1"));
        assert!(text.lines().any(|l| l.trim().starts_with("route_time_1:") && l.contains("- T <= 0")));
    }

    #[test]
    fn empty_victim_set_is_rejected() {
        let inst = Instance::new(
            10.0,
            10.0,
            Point::new(0.0, 0.0),
            vec![ResponderSpec { id: 0, speed: 1.0, tag_time: 3 }],
            vec![],
            0,
        )
        .unwrap();
        assert!(matches!(build_ilp_text(&inst), Err(SolveError::EmptyInstance)));
    }

    #[test]
    fn document_ends_cleanly() {
        let config = ScenarioConfig::new(1, 2, 40.0, 25.0);
        let inst = generate_instance(&config, 2).unwrap();
        let text = build_ilp_text(&inst).unwrap();
        assert!(text.trim_end().ends_with("End"));
        assert!(text.contains("start_departures:"));
        assert!(text.contains("tag_once_1:"));
        assert!(text.contains("leave_once_2:"));
        assert!(text.contains("leaver_tags_1_2:"));
    }
}
