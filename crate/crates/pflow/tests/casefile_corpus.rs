//! Corpus-level parser checks: totality over the bundled cases, table
//! counts against an independent line-counting pass, round-tripping
//! through the writer, and the solution-table contract.

mod common;

use common::*;
use pflow::casefile::{parse_case, write_case, write_solution, CaseError};
use pflow::network::Network;
use pflow::solvers::{solve, Method, SolverConfig};

/// Independent table-row counter: strips comments, finds each bracketed
/// `mpc.<name> = [ ... ]` block and counts the lines that carry at least
/// two numeric fields. Shares nothing with the parser.
fn count_rows(text: &str, table: &str) -> usize {
    let no_comments: String = text
        .lines()
        .map(|l| l.split('%').next().unwrap_or(""))
        .collect::<Vec<_>>()
        .join("\n");
    let start = no_comments
        .find(&format!("mpc.{table} = ["))
        .unwrap_or_else(|| panic!("table {table} not found"));
    let rest = &no_comments[start..];
    let end = rest.find("];").expect("table closed");
    rest[..end]
        .lines()
        .filter(|l| {
            l.split_whitespace()
                .filter(|tok| tok.trim_end_matches(';').parse::<f64>().is_ok())
                .count()
                >= 2
        })
        .count()
}

#[test]
fn corpus_parses_with_counts_matching_independent_scan() {
    let expected = [("case2", 2, 1, 1), ("case14", 14, 20, 5), ("case118", 118, 186, 54)];
    for (name, n_bus, n_branch, n_gen) in expected {
        let text = pflow::cases::by_name(name).unwrap();
        let parsed = parse_case::<f64>(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let case = parsed.case;
        assert_eq!(case.buses.len(), n_bus, "{name} bus count");
        assert_eq!(case.branches.len(), n_branch, "{name} branch count");
        assert_eq!(case.generators.len(), n_gen, "{name} generator count");
        assert_eq!(count_rows(text, "bus"), case.buses.len(), "{name} bus scan");
        assert_eq!(
            count_rows(text, "branch"),
            case.branches.len(),
            "{name} branch scan"
        );
        assert_eq!(count_rows(text, "gen"), case.generators.len(), "{name} gen scan");
        assert!(parsed.warnings.is_empty(), "{name}: {:?}", parsed.warnings);
    }
}

#[test]
fn writer_round_trips_every_bundled_case() {
    for (name, text) in pflow::cases::ALL {
        let case = parse_case::<f64>(text).unwrap().case;
        let rewritten = write_case(&case);
        let again = parse_case::<f64>(&rewritten)
            .unwrap_or_else(|e| panic!("{name} rewrite fails to parse: {e}"))
            .case;
        assert_eq!(case.name, again.name);
        assert_eq!(case.base_mva, again.base_mva);
        assert_eq!(case.buses.len(), again.buses.len());
        assert_eq!(case.branches.len(), again.branches.len());
        assert_eq!(case.generators.len(), again.generators.len());
        for (a, b) in case.buses.iter().zip(&again.buses) {
            assert_eq!(a.id, b.id);
            assert_eq!(a.kind, b.kind);
            for (x, y) in [
                (a.p_load, b.p_load),
                (a.q_load, b.q_load),
                (a.g_shunt, b.g_shunt),
                (a.b_shunt, b.b_shunt),
                (a.v_mag_init, b.v_mag_init),
                (a.v_ang_init, b.v_ang_init),
            ] {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{name}: bus field {x} vs {y}");
            }
        }
        for (a, b) in case.branches.iter().zip(&again.branches) {
            assert_eq!((a.from_bus, a.to_bus, a.in_service), (b.from_bus, b.to_bus, b.in_service));
            for (x, y) in [
                (a.r, b.r),
                (a.x, b.x),
                (a.b_charging, b.b_charging),
                (a.tap_ratio, b.tap_ratio),
                (a.phase_shift, b.phase_shift),
            ] {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{name}: branch field {x} vs {y}");
            }
        }
        for (a, b) in case.generators.iter().zip(&again.generators) {
            assert_eq!((a.bus, a.in_service), (b.bus, b.in_service));
            for (x, y) in [(a.p_gen, b.p_gen), (a.q_gen, b.q_gen), (a.v_set, b.v_set)] {
                assert!((x - y).abs() <= 1e-12 * (1.0 + x.abs()), "{name}: gen field {x} vs {y}");
            }
        }
    }
}

#[test]
fn comment_and_blank_line_insertion_is_invisible() {
    let mut rng = TestRng::new(17);
    let base = parse_case::<f64>(pflow::cases::CASE14).unwrap().case;
    // sprinkle comments and blank lines between tokens at random line breaks
    for round in 0..5 {
        let noisy: String = pflow::cases::CASE14
            .lines()
            .flat_map(|line| {
                let mut out = vec![line.to_string()];
                match rng.next_u64() % 4 {
                    0 => out.push(format!("% noise {round}")),
                    1 => out.push(String::new()),
                    2 => out.insert(0, "   % indented comment".to_string()),
                    _ => {}
                }
                out
            })
            .collect::<Vec<_>>()
            .join("\n");
        let parsed = parse_case::<f64>(&noisy).unwrap().case;
        assert_eq!(base, parsed, "round {round}");
    }
}

#[test]
fn out_of_service_elements_parse_but_leave_assembly() {
    let text = pflow::cases::CASE14
        .replace(
            "	9	10	0.03181	0.0845	0	0	0	0	0	0	1	-360	360;",
            "	9	10	0.03181	0.0845	0	0	0	0	0	0	0	-360	360;",
        )
        .replace(
            "	8	0	17.4	24	-6	1.09	100	1	100	0;",
            "	8	0	17.4	24	-6	1.09	100	0	100	0;",
        );
    // taking bus 8's only generator out of service makes it an invalid PV
    // bus, so flip it to PQ for this test
    let text = text.replace(
        "	8	2	0	0	0	0	1	1.09	-13.36	0	1	1.06	0.94;",
        "	8	1	0	0	0	0	1	1.09	-13.36	0	1	1.06	0.94;",
    );
    let case = parse_case::<f64>(&text).unwrap().case;
    assert_eq!(case.branches.len(), 20, "out branch still parsed");
    assert_eq!(case.generators.len(), 5, "out generator still parsed");
    assert!(!case.branches[15].in_service);
    assert!(!case.generators[4].in_service);
    let net = Network::new(&case).unwrap();
    // branch 9-10 removed from the Y-bus: off-diagonal becomes zero
    let y = net.ybus();
    let y_9_10 = y.get(8, 9); // positions of buses 9 and 10
    assert!(y_9_10.is_none_or(|v| v.norm() == 0.0), "got {y_9_10:?}");
    // and the case still solves
    let report = solve(&net, &net.assemble_state(1.0), &SolverConfig::new(Method::Fem));
    assert!(report.converged());
}

#[test]
fn solution_table_contract() {
    let case = parse(pflow::cases::CASE2);
    let net = Network::new(&case).unwrap();
    let report = solve(&net, &net.assemble_state(1.0), &SolverConfig::new(Method::Fem));
    assert!(report.converged());
    let sol = net.back_substitute(&report.final_state);

    let mut out = Vec::new();
    write_solution(&case, &sol, &mut out).unwrap();
    let text = String::from_utf8(out.clone()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3, "header plus one row per bus");
    assert!(lines[0].contains("bus") && lines[0].contains("v_mag_pu"));
    assert!(lines[1].trim_start().starts_with('1'));
    assert!(lines[2].trim_start().starts_with('2'));

    // determinism: a second write is byte-identical
    let mut again = Vec::new();
    write_solution(&case, &sol, &mut again).unwrap();
    assert_eq!(out, again);

    // angles reported in degrees, 6 significant digits
    let v2: Vec<&str> = lines[2].split_whitespace().collect();
    let ang: f64 = v2[2].parse().unwrap();
    assert!((ang - report.final_state.values[0].to_degrees()).abs() < 1e-4);
}

#[test]
fn empty_solution_is_rejected() {
    let case = parse(pflow::cases::CASE2);
    let sol = pflow::network::BusSolution::<f64> { rows: Vec::new() };
    let mut out = Vec::new();
    match write_solution(&case, &sol, &mut out) {
        Err(CaseError::SolutionEmpty) => {}
        other => panic!("expected empty-solution error, got {other:?}"),
    }
}

#[test]
fn partial_solution_is_rejected() {
    let case = parse(pflow::cases::CASE2);
    let net = Network::new(&case).unwrap();
    let report = solve(&net, &net.assemble_state(1.0), &SolverConfig::new(Method::Fem));
    let mut sol = net.back_substitute(&report.final_state);
    sol.rows.pop();
    let mut out = Vec::new();
    match write_solution(&case, &sol, &mut out) {
        Err(CaseError::SolutionIncomplete(2)) => {}
        other => panic!("expected incomplete-solution error, got {other:?}"),
    }
}

#[test]
fn multiple_generators_on_one_bus_aggregate() {
    let text = pflow::cases::CASE2.replace(
        "	1	50	10	300	-300	1	100	1	300	0;",
        "	1	30	6	300	-300	1	100	1	300	0;\n	1	20	4	300	-300	1	100	1	300	0;",
    );
    let case = parse_case::<f64>(&text).unwrap().case;
    assert_eq!(case.generators.len(), 2);
    let net = Network::new(&case).unwrap();
    let report = solve(&net, &net.assemble_state(1.0), &SolverConfig::new(Method::Fem));
    assert!(report.converged());
    // same network as the single-generator original
    let net0 = network(pflow::cases::CASE2);
    let report0 = solve(&net0, &net0.assemble_state(1.0), &SolverConfig::new(Method::Fem));
    assert!(
        inf_diff(&report.final_state.values, &report0.final_state.values) < 1e-12,
        "aggregation changed the solution"
    );
}
