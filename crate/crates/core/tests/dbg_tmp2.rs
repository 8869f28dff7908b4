use boxlab::boxmap::classify;
use boxlab::inducing::*;
use boxlab::realmap::QuadraticMap;
use std::time::Instant;

#[test]
fn dbg_steps() {
    let q = QuadraticMap::new(3.6).unwrap();
    let lvl = descend_renormalizations(&q, 16, 12).unwrap();
    let m0 = initial_box_map_at(&q, &lvl, 512).unwrap();
    println!(
        "initial: {:?} nbr {} central {:?}",
        classify(&m0).unwrap(),
        m0.branches.len(),
        m0.central_domain()
    );
    let mut cur = m0;
    for s in 1..=8 {
        let t = Instant::now();
        match general_inducing_step(&cur) {
            Ok((next, case, _tr)) => {
                println!(
                    "step {s} {:?}: close={} d={} basic={} high={} {:?}/{:?} nbox={} nbr={} ratio={:.3e} unres={:.2e}",
                    t.elapsed(),
                    case.close,
                    case.depth,
                    case.basic,
                    case.high,
                    case.resulting_type,
                    case.measured_type,
                    next.boxes.len(),
                    next.branches.len(),
                    next.central_domain().map(|c| c.len() / next.boxes[next.central().unwrap().range_box].len()).unwrap_or(f64::NAN),
                    next.unresolved_measure
                );
                cur = next;
            }
            Err(e) => {
                println!("step {s} {:?}: ERR {e}", t.elapsed());
                break;
            }
        }
    }
}
