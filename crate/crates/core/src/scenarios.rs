//! The two worked task sets used throughout the tests, examples and CLI.

use crate::model::{assign_rm_priorities, TaskSet, TaskSpec};

/// Four-task example set with control task τ2 and untrusted τ3.
pub fn table1() -> TaskSet {
    TaskSet::new(vec![
        TaskSpec::new(1, 5, 1).with_priority(1),
        TaskSpec::new(2, 10, 3).with_priority(2).control(0),
        TaskSpec::new(3, 20, 3).with_priority(3).untrusted(),
        TaskSpec::new(4, 20, 2).with_priority(4),
    ])
    .expect("static task set")
}

/// Automotive case-study set with priorities in listed order.
pub fn table2() -> TaskSet {
    TaskSet::new(vec![
        TaskSpec::new(1, 10, 2).with_priority(1).control(8),
        TaskSpec::new(2, 40, 3).with_priority(2).control(7),
        TaskSpec::new(3, 20, 2).with_priority(3).control(5),
        TaskSpec::new(4, 100, 5).with_priority(4).untrusted(),
        TaskSpec::new(5, 100, 4).with_priority(5).untrusted(),
        TaskSpec::new(6, 40, 2).with_priority(6).untrusted(),
    ])
    .expect("static task set")
}

/// The automotive set under rate-monotonic priorities, as used by the
/// end-to-end case study.
pub fn table2_rm() -> TaskSet {
    assign_rm_priorities(&table2())
}
