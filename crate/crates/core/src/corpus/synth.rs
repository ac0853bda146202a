use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, RawExample};

/// System instruction prepended to every synthetic prompt (version 1).
pub const SYSTEM_INSTRUCTION: &str = include_str!("../../resources/system_instruction_v1.txt");

const COLORS: [&str; 8] = [
    "red", "blue", "green", "gray", "pink", "black", "white", "brown",
];
const CHOICE_LETTERS: [char; 4] = ['A', 'B', 'C', 'D'];
// correct position (4) times ordered distractor triples from 7 colors
const CHOICE_LAYOUTS: u64 = 4 * 7 * 6 * 5;
const ENUMERATION_LIMIT: u64 = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    ArithmeticAddition,
    ArithmeticSubtraction,
    MultipleChoiceLookup,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticTaskSpec {
    pub task: TaskKind,
    /// Operands are drawn from `0 .. 10^digits`. For the lookup task this is
    /// the digit count of the item codes.
    pub operand_digits: u32,
    pub train_count: usize,
    pub eval_count: usize,
    pub seed: u64,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        Self {
            task: TaskKind::ArithmeticAddition,
            operand_digits: 2,
            train_count: 5000,
            eval_count: 500,
            seed: 7,
        }
    }
}

impl SyntheticTaskSpec {
    fn operand_range(&self) -> u64 {
        10u64.pow(self.operand_digits)
    }

    /// Number of distinct prompts the task can produce.
    pub fn capacity(&self) -> u64 {
        let n = self.operand_range();
        match self.task {
            TaskKind::ArithmeticAddition => n * n,
            TaskKind::ArithmeticSubtraction => n * (n + 1) / 2,
            TaskKind::MultipleChoiceLookup => n * CHOICE_LAYOUTS,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.operand_digits == 0 || self.operand_digits > 6 {
            return Err(CorpusError::InvalidSpec(format!(
                "operand_digits must be in 1..=6, got {}",
                self.operand_digits
            )));
        }
        if self.train_count == 0 || self.eval_count == 0 {
            return Err(CorpusError::InvalidSpec(
                "train and eval counts must be at least 1".into(),
            ));
        }
        let requested = (self.train_count + self.eval_count) as u64;
        let capacity = self.capacity();
        if requested > capacity {
            return Err(CorpusError::Capacity {
                requested,
                capacity,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub train: Vec<RawExample>,
    pub eval: Vec<RawExample>,
}

/// Generates disjoint train and eval sets. Every distinct problem index maps
/// to a distinct prompt, so drawing indices without replacement keeps the two
/// splits disjoint.
pub fn generate_corpus(spec: &SyntheticTaskSpec) -> Result<Corpus, CorpusError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let total = spec.train_count + spec.eval_count;
    let indices = sample_distinct(&mut rng, spec.capacity(), total);

    // fact table for the lookup task; drawn after the indices so arithmetic
    // corpora do not depend on it
    let colors: Vec<usize> = match spec.task {
        TaskKind::MultipleChoiceLookup => (0..spec.operand_range())
            .map(|_| rng.random_range(0..COLORS.len()))
            .collect(),
        _ => Vec::new(),
    };

    let examples: Vec<RawExample> = indices
        .into_iter()
        .map(|idx| match spec.task {
            TaskKind::ArithmeticAddition => {
                let n = spec.operand_range();
                addition(idx / n, idx % n, spec.operand_digits)
            }
            TaskKind::ArithmeticSubtraction => {
                let (a, b) = unrank_ordered_pair(idx);
                subtraction(a, b, spec.operand_digits)
            }
            TaskKind::MultipleChoiceLookup => lookup(idx, spec.operand_digits, &colors),
        })
        .collect();

    let mut train = examples;
    let eval = train.split_off(spec.train_count);
    Ok(Corpus { train, eval })
}

fn sample_distinct(rng: &mut ChaCha8Rng, space: u64, count: usize) -> Vec<u64> {
    if space <= ENUMERATION_LIMIT {
        let mut all: Vec<u64> = (0..space).collect();
        let (chosen, _) = all.partial_shuffle(rng, count);
        return chosen.to_vec();
    }
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let idx = rng.random_range(0..space);
        if seen.insert(idx) {
            out.push(idx);
        }
    }
    out
}

/// Maps `0 .. n(n+1)/2` onto pairs `a >= b`.
fn unrank_ordered_pair(idx: u64) -> (u64, u64) {
    // row a holds a+1 pairs and starts at a(a+1)/2
    let mut a = (((8 * idx + 1) as f64).sqrt() as u64).saturating_sub(1) / 2;
    while (a + 1) * (a + 2) / 2 <= idx {
        a += 1;
    }
    while a * (a + 1) / 2 > idx {
        a -= 1;
    }
    (a, idx - a * (a + 1) / 2)
}

fn digits_lsb(mut x: u64, width: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(width);
    for _ in 0..width {
        out.push(x % 10);
        x /= 10;
    }
    out
}

fn prompt(question: &str) -> String {
    format!("{SYSTEM_INSTRUCTION}\nUser: {question}\nAssistant:")
}

fn column_width(a: u64, b: u64) -> usize {
    a.max(b).max(1).to_string().len()
}

/// Column-wise addition from the units digit, one line per column with the
/// incoming carry spelled out.
fn addition(a: u64, b: u64, _digits: u32) -> RawExample {
    let width = column_width(a, b);
    let (da, db) = (digits_lsb(a, width), digits_lsb(b, width));
    let mut carry = 0;
    let mut thinking = String::new();
    for i in 0..width {
        let sum = da[i] + db[i] + carry;
        if carry > 0 {
            thinking.push_str(&format!("{}+{}+{}={}\n", da[i], db[i], carry, sum));
        } else {
            thinking.push_str(&format!("{}+{}={}\n", da[i], db[i], sum));
        }
        carry = sum / 10;
    }
    RawExample {
        prompt: prompt(&format!("{a}+{b}=?")),
        thinking,
        answer: (a + b).to_string(),
    }
}

/// Column-wise subtraction with borrows, `a >= b`.
fn subtraction(a: u64, b: u64, _digits: u32) -> RawExample {
    let width = column_width(a, b);
    let (da, db) = (digits_lsb(a, width), digits_lsb(b, width));
    let mut borrow = 0;
    let mut thinking = String::new();
    for i in 0..width {
        let top = da[i] as i64 - borrow;
        let (lhs, next_borrow) = if top < db[i] as i64 {
            (top + 10, 1)
        } else {
            (top, 0)
        };
        let diff = lhs - db[i] as i64;
        let head = if next_borrow == 1 { 10 + da[i] as i64 } else { da[i] as i64 };
        if borrow > 0 {
            thinking.push_str(&format!("{}-{}-{}={}\n", head, db[i], borrow, diff));
        } else {
            thinking.push_str(&format!("{}-{}={}\n", head, db[i], diff));
        }
        borrow = next_borrow;
    }
    RawExample {
        prompt: prompt(&format!("{a}-{b}=?")),
        thinking,
        answer: (a - b).to_string(),
    }
}

fn lookup(idx: u64, digits: u32, colors: &[usize]) -> RawExample {
    let item = idx / CHOICE_LAYOUTS;
    let mut layout = idx % CHOICE_LAYOUTS;
    let correct_slot = (layout % 4) as usize;
    layout /= 4;

    let truth = colors[item as usize];
    let mut pool: Vec<usize> = (0..COLORS.len()).filter(|&c| c != truth).collect();
    let mut distractors = Vec::with_capacity(3);
    for radix in [7u64, 6, 5] {
        let pick = (layout % radix) as usize;
        layout /= radix;
        distractors.push(pool.remove(pick));
    }
    let mut options = distractors;
    options.insert(correct_slot, truth);

    let name = format!("item {:0width$}", item, width = digits as usize);
    let listing: Vec<String> = options
        .iter()
        .zip(CHOICE_LETTERS)
        .map(|(&c, letter)| format!("{letter}) {}", COLORS[c]))
        .collect();
    let letter = CHOICE_LETTERS[correct_slot];
    RawExample {
        prompt: prompt(&format!("Which color is {name}? {}", listing.join(" "))),
        thinking: format!("{name} is {}\n{} is {letter}\n", COLORS[truth], COLORS[truth]),
        answer: letter.to_string(),
    }
}
