//! Fixtures shared by the core tests and the acceptance suite.
#![allow(dead_code)]

pub mod nets;

use std::path::PathBuf;

use fmgrid::prompt::{Binding, TemplateId};
use fmgrid::{Action, Cell};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn golden_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden")
}

pub fn golden_path(id: TemplateId) -> PathBuf {
    golden_dir().join(id.file_name())
}

/// One binding that fills every placeholder of every template.
pub fn fixture_binding() -> Binding {
    Binding::new()
        .n(5)
        .observation(Cell::new(2, 3))
        .action(Action::Up)
        .reward_location(Cell::new(4, 4))
        .key_location(Cell::new(0, 4))
        .probabilities(0.8, 0.2)
        .memory(&[
            "Executed right at [0, 0] resulting in [1, 0] and no reward.".to_string(),
            "Executed up at [1, 0] resulting in [1, 1] and no reward.".to_string(),
        ])
}

/// Response in the loose grammar the fallback parser accepts: the answer pair comes
/// first among bracketed pairs, wrapped in arbitrary prose and whitespace.
pub fn noisy_response(rng: &mut ChaCha8Rng, cell: Cell, reward: Option<u8>) -> String {
    const PREFIX: &[&str] = &[
        "",
        "Answer: ",
        "The agent moves to ",
        "Sure! After the action, the new location is ",
        "Let me think. Step 3 of 4: the agent ends at ",
        "```\n",
        "**Next state:** ",
        "Output -> ",
    ];
    const SUFFIX: &[&str] = &["", ".", "\n```", " (within the grid)", "!", "\n\nHope this helps.", " ;"];
    let sp = |rng: &mut ChaCha8Rng| [" ", "", "  ", "\t"].choose(rng).unwrap().to_string();
    let pair = format!("[{}{},{}{}{}]", sp(rng), cell.x, sp(rng), cell.y, sp(rng));
    let mut s = format!("{}{}", PREFIX.choose(rng).unwrap(), pair);
    if let Some(r) = reward {
        let join = [", ", " and the reward is ", ",", " with reward ", "; reward = "].choose(rng).unwrap();
        s.push_str(&format!("{join}{r}"));
    }
    s.push_str(SUFFIX.choose(rng).unwrap());
    if rng.random_bool(0.3) {
        s = format!("{}{}{}", sp(rng), s, ["\n", " ", "\r\n"].choose(rng).unwrap());
    }
    s
}

