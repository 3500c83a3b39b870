//! Sweeps each shipped plant's input weight and reports the admissible
//! delay it produces on its task set. The chosen weights sit in the middle
//! of the longest band of weights that yields the target delay.

use delayguard::control::{max_admissible_delay, PlantModel};
use delayguard::model::TaskSet;
use delayguard::{plants, scenarios};

struct Target {
    name: &'static str,
    build: fn(f64) -> PlantModel,
    taskset: TaskSet,
    victim: u32,
    want: i64,
}

fn main() -> delayguard::Result<()> {
    let targets = [
        Target { name: "ttc_table1", build: plants::ttc_with_weight, taskset: scenarios::table1(), victim: 2, want: 3 },
        Target { name: "cc", build: plants::cc_with_weight, taskset: scenarios::table2_rm(), victim: 1, want: 3 },
        Target { name: "esp", build: plants::esp_with_weight, taskset: scenarios::table2_rm(), victim: 2, want: 12 },
        Target { name: "ttc", build: plants::ttc_with_weight, taskset: scenarios::table2_rm(), victim: 3, want: 8 },
    ];
    for t in &targets {
        let victim = t.taskset.task(t.victim)?;
        // longest contiguous run of weights that give the target
        let (mut band, mut run): (Vec<f64>, Vec<f64>) = (Vec::new(), Vec::new());
        for step in 0..=120 {
            let r = 10f64.powf(-12.0 + step as f64 * 0.1);
            let rep = max_admissible_delay(&(t.build)(r), victim, &t.taskset)?;
            if rep.max_delay == Some(t.want) {
                run.push(r);
                if run.len() > band.len() {
                    band = run.clone();
                }
            } else {
                run.clear();
            }
            println!("{:<10} r={r:.3e} max_delay={:?}", t.name, rep.max_delay);
        }
        match (band.first(), band.last()) {
            (Some(lo), Some(hi)) => println!("{}: target {} for r in [{lo:.3e}, {hi:.3e}], midpoint {:.3e}", t.name, t.want, (lo * hi).sqrt()),
            _ => println!("{}: target {} not reached", t.name, t.want),
        }
    }
    Ok(())
}
