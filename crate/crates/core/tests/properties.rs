use proptest::prelude::*;

use paradin::harness::config::parse_pairs;
use paradin::runtime::{MessageKind, Payload};
use paradin::solvers::linear::{block_jacobi_linear, paradin_linear, IterControl, LinearSystem};
use paradin::{BandedMatrix, BlockLayout, Mode, NormKind, Runtime, WorkerTopology};

/// Diagonally dominant banded matrices with entries from `vals`.
fn system(n: usize, bw: usize, levels: usize, vals: &[f64]) -> LinearSystem {
    let mut it = vals.iter().cycle();
    let mut a = Vec::new();
    let mut rhs = Vec::new();
    for _ in 0..levels {
        let mut m = BandedMatrix::zeros(n, bw);
        for r in 0..n {
            for c in m.row_cols(r) {
                let v = 0.3 * it.next().unwrap();
                m.set(r, c, if r == c { 1.5 + v.abs() } else { v });
            }
        }
        a.push(m);
        rhs.push((0..n).map(|_| *it.next().unwrap()).collect());
    }
    LinearSystem { a, rhs }
}

fn rel_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let scale = b.iter().flatten().fold(1e-300f64, |m, v| m.max(v.abs()));
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
        / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn paradin_matches_time_marching(
        n in 1usize..8,
        bw in 0usize..3,
        levels in 1usize..9,
        vals in prop::collection::vec(-1.0f64..1.0, 16..64),
    ) {
        let sys = system(n, bw.min(n - 1), levels, &vals);
        let mut rt = Runtime::emulated(levels).unwrap();
        let got = paradin_linear(&mut rt, &sys).unwrap().delta;
        let want = sys.solve_marching().unwrap();
        prop_assert!(rel_diff(&got, &want) < 1e-10);
    }

    #[test]
    fn block_jacobi_is_exact_after_m_sweeps(
        n in 1usize..6,
        m in 1usize..5,
        len in 1usize..4,
        vals in prop::collection::vec(-1.0f64..1.0, 16..64),
    ) {
        let nt = m * len;
        let sys = system(n, 1.min(n - 1), nt, &vals);
        let layout = BlockLayout::new(nt, m).unwrap();
        let mut rt = Runtime::emulated(nt).unwrap();
        let ctrl = IterControl { cap: m, tol: 0.0, norm: NormKind::Linf, record: false };
        let out = block_jacobi_linear(&mut rt, &sys, &layout, &ctrl, 1.0).unwrap();
        prop_assert_eq!(out.sweeps, m);
        prop_assert!(rel_diff(&out.delta, &sys.solve_marching().unwrap()) < 1e-10);
    }

    #[test]
    fn message_delivery_is_mode_independent(
        workers in 1usize..7,
        sends in prop::collection::vec((0usize..7, 0usize..7, 0u64..4, -5.0f64..5.0), 0..40),
    ) {
        let run = |mode: Mode| {
            let mut rt = Runtime::new(WorkerTopology::new(workers, mode, 3)).unwrap();
            rt.run_stage(|ctx| -> Result<(), paradin::RuntimeError> {
                for &(from, to, tag, v) in &sends {
                    if from % workers == ctx.id() {
                        ctx.send(to % workers, MessageKind::CouplingVector, tag, Payload::Vector(vec![v]))?;
                    }
                }
                Ok(())
            })
            .unwrap();
            rt.run_stage(|ctx| -> Result<Vec<(usize, u64, Vec<f64>)>, paradin::RuntimeError> {
                let mut got = Vec::new();
                while ctx.pending() > 0 {
                    let m = ctx.recv()?;
                    if let Payload::Vector(v) = m.payload {
                        got.push((m.source, m.tag, v));
                    }
                }
                Ok(got)
            })
            .unwrap()
        };
        prop_assert_eq!(run(Mode::Emulated), run(Mode::Parallel));
    }

    #[test]
    fn config_text_round_trips(
        entries in prop::collection::btree_map("[a-z][a-z_]{0,10}", "[A-Za-z0-9_.,:-]{1,12}", 0..10),
    ) {
        let mut text = String::from("# generated\n\n");
        for (k, v) in &entries {
            text.push_str(&format!("  {k} =  {v}\n"));
        }
        prop_assert_eq!(parse_pairs(&text).unwrap(), entries);
    }
}
