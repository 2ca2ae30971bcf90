//! The three two-to-four-op interleavings used to compare how the lists
//! accept or reject schedules. `R(h)` is a `READ_NEXT` of `h`; a read of a
//! node where the walk stops is a `READ_VAL`.

use super::script::Script;
use crate::probe::Action::{Invoke, NewNode, ReadNext, ReadVal, Respond, WriteNext};
use crate::set_api::OpKind::{Insert, Remove};

/// insert(1) and insert(2) on an empty list both read `h` and `t`, both
/// create their node, then both write `h`. Accepting it loses one insert.
pub fn fig2() -> Script {
    Script::new(&[], &[(Insert, 1), (Insert, 2)])
        .gate(1, Invoke, "")
        .gate(1, ReadNext, "h")
        .gate(2, Invoke, "")
        .gate(2, ReadNext, "h")
        .gate(1, ReadVal, "t")
        .gate(1, NewNode, "X1")
        .gate(2, ReadVal, "t")
        .gate(2, NewNode, "X2")
        .gate(1, WriteNext, "h")
        .gate(2, WriteNext, "h")
        .gate(1, Respond, "")
        .gate(2, Respond, "")
}

/// insert(2) on {1} pauses right after creating X2; insert(1) reads `h` and
/// X1 and returns false before insert(2) links X2 in.
pub fn fig3() -> Script {
    Script::new(&[1], &[(Insert, 2), (Insert, 1)])
        .gate(1, Invoke, "")
        .gate(1, ReadNext, "h")
        .gate(2, Invoke, "")
        .gate(2, ReadNext, "h")
        .gate(1, ReadNext, "X1")
        .gate(1, NewNode, "X2")
        .gate(2, ReadVal, "X1")
        .gate(2, Respond, "")
        .gate(1, WriteNext, "X1")
        .gate(1, Respond, "")
}

/// On {2, 3, 4}: insert(1) and remove(2) race at the head; insert(1) links X1
/// first, so remove(2) unlinks X2 from wherever it now hangs. insert(4) then
/// walks to X1 and pauses while insert(3) walks to X3 and returns false;
/// insert(4) resumes and reads X4.
pub fn fig4() -> Script {
    Script::new(
        &[2, 3, 4],
        &[(Insert, 1), (Remove, 2), (Insert, 4), (Insert, 3)],
    )
    .gate(1, Invoke, "")
    .gate(1, ReadNext, "h")
    .gate(2, Invoke, "")
    .gate(2, ReadNext, "h")
    .gate(1, ReadVal, "X2")
    .gate(2, ReadVal, "X2")
    .gate(1, NewNode, "X1")
    .gate(1, WriteNext, "h")
    .gate(1, Respond, "")
    .gate(2, WriteNext, "*")
    .gate(2, Respond, "")
    .gate(3, Invoke, "")
    .gate(3, ReadNext, "h")
    .gate(3, ReadNext, "X1")
    .gate(4, Invoke, "")
    .gate(4, ReadNext, "h")
    .gate(4, ReadNext, "X1")
    .gate(4, ReadVal, "X3")
    .gate(4, Respond, "")
    .gate(3, ReadVal, "X4")
    .gate(3, Respond, "")
}

/// Looks up a built-in schedule by name (`fig2`, `fig3`, `fig4`).
pub fn by_name(name: &str) -> Option<Script> {
    match name {
        "fig2" => Some(fig2()),
        "fig3" => Some(fig3()),
        "fig4" => Some(fig4()),
        _ => None,
    }
}
