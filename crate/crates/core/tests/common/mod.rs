#![allow(dead_code)]

use sftkey::corpus::{reconstruct, RawExample, TaggedExample, Vocabulary};
use sftkey::model::{ModelConfig, ModelParams};
use sftkey::training::{StageHyperparams, Strategy, TrainPlan};

pub const DATASETS: [&str; 4] = ["GSM8K", "OpenR1-Math-220k", "OpenBookQA", "CoT-Collection"];
pub const METHODS: [Strategy; 4] = [Strategy::Sft, Strategy::SftTag, Strategy::KeyTag, Strategy::SftKeyTag];

/// Published per-dataset values, one row per method in `METHODS` order.
pub struct ModelTable {
    pub model: &'static str,
    pub rows: [[f64; 4]; 4],
}

/// Composite scores with their per-row averages and the printed relative
/// improvement of the last row (percent), when one is printed.
pub struct ScoreTable {
    pub model: &'static str,
    pub rows: [[f64; 4]; 4],
    pub averages: [f64; 4],
    pub improvement: f64,
}

pub const ACCURACY: [ModelTable; 5] = [
    ModelTable {
        model: "Qwen3-8B-Base",
        rows: [
            [0.8378, 0.5180, 0.8600, 0.6120],
            [0.8300, 0.6134, 0.8660, 0.6092],
            [0.7982, 0.5789, 0.8629, 0.7093],
            [0.8309, 0.8116, 0.8600, 0.6140],
        ],
    },
    ModelTable {
        model: "SmolLM3-3B-Base",
        rows: [
            [0.6732, 0.3140, 0.7880, 0.5280],
            [0.6854, 0.4194, 0.6180, 0.5030],
            [0.8354, 0.3761, 0.774, 0.526],
            [0.6884, 0.4677, 0.7455, 0.5442],
        ],
    },
    ModelTable {
        model: "Qwen2.5-7B",
        rows: [
            [0.7589, 0.4620, 0.8460, 0.6220],
            [0.7582, 0.4380, 0.8560, 0.6260],
            [0.7885, 0.546, 0.896, 0.64],
            [0.7809, 0.6529, 0.8920, 0.6220],
        ],
    },
    ModelTable {
        model: "Qwen2.5-3B",
        rows: [
            [0.6785, 0.4420, 0.7340, 0.5320],
            [0.5524, 0.4860, 0.7120, 0.5360],
            [0.7187, 0.5100, 0.7900, 0.49],
            [0.6770, 0.4880, 0.7100, 0.5711],
        ],
    },
    ModelTable {
        model: "Qwen2.5-1.5B",
        rows: [
            [0.4640, 0.4060, 0.6480, 0.4640],
            [0.4760, 0.4000, 0.8220, 0.4760],
            [0.49, 0.4040, 0.8380, 0.49],
            [0.5269, 0.4906, 0.7440, 0.4560],
        ],
    },
];

/// Format adherence is only published for three of the five models.
pub const FORMAT: [ModelTable; 3] = [
    ModelTable {
        model: "Qwen3-8B-Base",
        rows: [
            [0.7946, 0.8460, 1.0000, 0.9980],
            [0.9984, 0.8884, 1.0000, 1.0000],
            [0.5910, 0.5929, 0.9072, 0.9138],
            [1.0000, 0.9839, 1.0000, 1.0000],
        ],
    },
    ModelTable {
        model: "SmolLM3-3B-Base",
        rows: [
            [0.9909, 0.7920, 1.0000, 0.9940],
            [0.9924, 0.9032, 0.9360, 0.9939],
            [0.0007, 0.0091, 0.2580, 0.0040],
            [0.9931, 0.6505, 0.9939, 0.9959],
        ],
    },
    ModelTable {
        model: "Qwen2.5-7B",
        rows: [
            [0.9977, 0.8460, 1.0000, 0.9980],
            [0.9984, 0.8460, 1.0000, 0.9960],
            [0.0000, 0.0000, 0.0000, 0.0000],
            [0.9848, 0.8823, 0.9900, 0.9960],
        ],
    },
];

pub const SCORES: [ScoreTable; 5] = [
    ScoreTable {
        model: "Qwen3-8B-Base",
        rows: [
            [0.8218, 0.6164, 0.9020, 0.7278],
            [0.8805, 0.6959, 0.9062, 0.7264],
            [0.7360, 0.5831, 0.8762, 0.6921],
            [0.8816, 0.8633, 0.9020, 0.7298],
        ],
        averages: [0.7670, 0.8022, 0.7218, 0.8441],
        improvement: 10.05,
    },
    ScoreTable {
        model: "Qwen2.5-7B",
        rows: [
            [0.8305, 0.5772, 0.8922, 0.7348],
            [0.8302, 0.5604, 0.8992, 0.7370],
            [0.5519, 0.3822, 0.6272, 0.4480],
            [0.8420, 0.7217, 0.9214, 0.7342],
        ],
        averages: [0.7586, 0.7567, 0.5023, 0.8048],
        improvement: 6.07,
    },
    ScoreTable {
        model: "SmolLM3-3B-Base",
        rows: [
            [0.7685, 0.4574, 0.8516, 0.6678],
            [0.7775, 0.5645, 0.7134, 0.6502],
            [0.5850, 0.2660, 0.6192, 0.3694],
            [0.7798, 0.5225, 0.8200, 0.6797],
        ],
        averages: [0.6863, 0.6764, 0.4599, 0.7005],
        improvement: 2.06,
    },
    ScoreTable {
        model: "Qwen2.5-3B",
        rows: [
            [0.4749, 0.3094, 0.5138, 0.3724],
            [0.3866, 0.3402, 0.4984, 0.3752],
            [0.5030, 0.357, 0.553, 0.343],
            [0.4739, 0.3416, 0.497, 0.3997],
        ],
        averages: [0.4176, 0.4001, 0.4390, 0.4280],
        improvement: 2.49,
    },
    ScoreTable {
        model: "Qwen2.5-1.5B",
        rows: [
            [0.3248, 0.2842, 0.4536, 0.3248],
            [0.3332, 0.2800, 0.5754, 0.3332],
            [0.3430, 0.2828, 0.5866, 0.3430],
            [0.3688, 0.3434, 0.5208, 0.3192],
        ],
        averages: [0.3468, 0.3804, 0.4517, 0.3880],
        improvement: 4.12,
    },
];

/// Table cells whose composite score does not follow from the published
/// accuracy and format values: (model, method, dataset).
pub const SCORE_EXCEPTIONS: [(&str, Strategy, &str); 2] = [
    ("Qwen3-8B-Base", Strategy::Sft, "GSM8K"),
    ("Qwen3-8B-Base", Strategy::KeyTag, "CoT-Collection"),
];

/// Rows whose printed average is not the mean of their cells.
pub const AVERAGE_EXCEPTIONS: [(&str, Strategy); 1] = [("Qwen2.5-1.5B", Strategy::KeyTag)];

/// Rows whose printed improvement does not follow from their averages.
pub const IMPROVEMENT_EXCEPTIONS: [&str; 1] = ["Qwen2.5-1.5B"];

pub fn table<'a>(tables: &'a [ModelTable], model: &str) -> Option<&'a ModelTable> {
    tables.iter().find(|t| t.model == model)
}

/// (text, expected check_format verdict, description).
pub const FORMAT_FIXTURES: &[(&str, bool, &str)] = &[
    ("<Thinking>x</Thinking><Answer>y</Answer>", true, "minimal"),
    ("<Thinking>3+4 is 7</Thinking><Answer>7</Answer><|eos|>", true, "trailing eos"),
    ("<Thinking>a</Thinking><Answer>b</Answer>\n", true, "trailing newline"),
    ("<Thinking>a</Thinking><Answer>b</Answer>  \n\t", true, "trailing mixed whitespace"),
    ("<Thinking>a</Thinking><Answer>b</Answer> <|eos|> \n", true, "eos between whitespace"),
    ("<Thinking></Thinking><Answer>b</Answer>", true, "empty thinking"),
    ("<Thinking>a</Thinking><Answer></Answer>", true, "empty answer is still structural"),
    ("<Thinking>line one\nline two</Thinking><Answer>B</Answer>", true, "multiline thinking"),
    ("<Thinking> padded </Thinking><Answer> 42 </Answer>", true, "inner whitespace"),
    ("<Thinking>a < b and c > d</Thinking><Answer>yes</Answer>", true, "angle brackets"),
    ("<Thinking>a</Thinking><Answer>x <Answ y</Answer>", true, "partial tag text"),
    ("<Thinking>a</Thinking><Answer>b</Answer><|eos|>", true, "eos immediately after"),
    ("y", false, "bare answer"),
    ("", false, "empty"),
    ("<Answer>y</Answer><Thinking>x</Thinking>", false, "answer before thinking"),
    ("<Thinking>x</Thinking>", false, "missing answer"),
    ("<Answer>y</Answer>", false, "missing thinking"),
    ("<Thinking>x<Answer>y</Answer>", false, "missing thinking close"),
    ("<Thinking>x</Thinking><Answer>y", false, "missing answer close"),
    ("<Thinking>x</Thinking> <Answer>y</Answer>", false, "space between segments"),
    ("<Thinking>x</Thinking>\n<Answer>y</Answer>", false, "newline between segments"),
    (" <Thinking>x</Thinking><Answer>y</Answer>", false, "leading space"),
    ("Sure! <Thinking>x</Thinking><Answer>y</Answer>", false, "leading prose"),
    ("<Thinking>x</Thinking><Answer>y</Answer> done", false, "trailing prose"),
    ("<Thinking><Thinking>x</Thinking><Answer>y</Answer>", false, "duplicate thinking open"),
    ("<Thinking>x</Thinking></Thinking><Answer>y</Answer>", false, "duplicate thinking close"),
    ("<Thinking>x</Thinking><Answer><Answer>y</Answer>", false, "duplicate answer open"),
    ("<Thinking>x</Thinking><Answer>y</Answer></Answer>", false, "duplicate answer close"),
    (
        "<Thinking>x</Thinking><Answer>y</Answer><Thinking>x</Thinking><Answer>y</Answer>",
        false,
        "repeated block",
    ),
    ("<Thinking>x <Answer>z</Answer></Thinking><Answer>y</Answer>", false, "answer nested in thinking"),
    ("<Thinking>x</Thinking><Answer>y <Thinking>z</Answer>", false, "thinking tag inside answer"),
    ("<Thinking>x</Answer><Answer>y</Thinking>", false, "swapped closers"),
    ("<thinking>x</thinking><answer>y</answer>", false, "lowercase tags"),
    ("<Thinking >x</Thinking><Answer>y</Answer>", false, "malformed open tag"),
    ("<Thinking>x</Thinking><Answer>y</Answer><|eos|><|eos|>", false, "two eos markers"),
    ("<Thinking>x</Thinking><Answer>y</Answer>\n<|eos|>x", false, "text after eos"),
    ("<|bos|><Thinking>x</Thinking><Answer>y</Answer>", false, "leading bos"),
];

pub fn vocab() -> Vocabulary {
    Vocabulary::standard()
}

pub fn example(prompt: &str, thinking: &str, answer: &str) -> TaggedExample {
    reconstruct(&RawExample::new(prompt, thinking, answer).unwrap(), &vocab()).unwrap()
}

/// A handful of short examples sharing a prompt prefix.
pub fn small_set() -> Vec<TaggedExample> {
    vec![
        example("Q: 3+4=", "3+4 is 7", "7"),
        example("Q: 5+5=", "5+5 is 10", "10"),
        example("Q: 2+9=", "2+9 is 11", "11"),
        example("Q: 6+1=", "6+1 is 7", "7"),
    ]
}

pub fn tiny_config(n_layers: usize, d_model: usize, seed: u64) -> ModelConfig {
    ModelConfig {
        n_layers,
        d_model,
        n_heads: 2,
        d_ff: 2 * d_model,
        vocab_size: 103,
        max_seq_len: 64,
        init_seed: seed,
    }
}

pub fn tiny_model(seed: u64) -> ModelParams {
    ModelParams::init(&tiny_config(1, 16, seed)).unwrap()
}

pub fn fast_hyper(lr: f64, epochs: usize) -> StageHyperparams {
    StageHyperparams {
        learning_rate: lr,
        warmup_fraction: 0.0,
        weight_decay: 0.0,
        epochs,
        batch_size: 4,
        clip_norm: 1.0,
        seed: 3,
    }
}

pub fn plan(strategy: Strategy, lr: f64, epochs: usize) -> TrainPlan {
    TrainPlan::uniform(strategy, fast_hyper(lr, epochs))
}
