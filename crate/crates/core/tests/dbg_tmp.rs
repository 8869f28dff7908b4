use boxlab::inducing::*;
use boxlab::realmap::QuadraticMap;

#[test]
fn dbg_cascade_36() {
    let q = QuadraticMap::new(3.6).unwrap();
    let cfg = CascadeConfig {
        max_steps: 8,
        stop: StopRule::Steps(8),
        ..Default::default()
    };
    match run_cascade(&q, &cfg) {
        Ok(out) => {
            println!("levels descended: {}", out.levels_descended);
            println!("termination: {:?}", out.termination);
            println!("ledger abort: {:?}", out.ledger_abort);
            for r in &out.records {
                println!(
                    "step {} case {:?} tag {:?} boxes {:?} ratio {:?} alpha {:.3} eps {:.3e} nbr {} unres {:.2e} v {:?}",
                    r.step,
                    r.case.map(|c| (c.close, c.basic, c.high, c.resulting_type)),
                    r.tag, r.box_lengths, r.ratio, r.alpha_fineness,
                    r.min_extendibility, r.branch_count, r.unresolved_measure,
                    r.v_bound_trend,
                );
            }
        }
        Err(e) => println!("ERR: {e}"),
    }
}
