//! Synthetic video-description corpus with keyword-planted sentiment.
//!
//! Each description is neutral filler text about a political figure with one
//! to three sentiment keywords of its class inserted at random positions,
//! sometimes decorated with URLs, hashtags, mentions or emoji. A fraction of
//! labels is then flipped to model annotation noise; the planted label is
//! kept alongside.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::Sentiment;

pub const POSITIVE_WORDS: &[&str] = &[
    "hebat", "bagus", "mantap", "jujur", "amanah", "sukses", "bangga", "cerdas", "peduli", "tegas",
    "berprestasi", "luar-biasa", "terbaik", "dukung", "merakyat",
];

pub const NEGATIVE_WORDS: &[&str] = &[
    "korupsi", "bohong", "gagal", "buruk", "curang", "lemah", "kecewa", "tolak", "payah", "munafik",
    "rusak", "hancur", "pencitraan", "blunder", "skandal",
];

const FIGURES: &[&str] = &["anies", "ganjar", "prabowo", "puan"];

const FILLER: &[&str] = &[
    "pilpres", "pemilu", "capres", "cawapres", "debat", "kampanye", "jakarta", "indonesia", "rakyat",
    "partai", "koalisi", "survei", "elektabilitas", "video", "berita", "terbaru", "hari", "ini", "live",
    "wawancara", "pidato", "acara", "warga", "kunjungan", "daerah", "program", "ekonomi", "pendidikan",
    "kesehatan", "infrastruktur", "jalan", "pasar", "petani", "nelayan", "buruh", "mahasiswa", "relawan",
    "tim", "pemenangan", "sidang", "menteri", "gubernur", "presiden", "ketua", "dpr", "sore", "malam",
    "pagi", "minggu", "tahun", "bahas", "soal", "isu", "visi", "misi", "janji", "politik", "nasional",
    "lokal", "media", "sosial", "kanal", "tonton", "simak", "lengkap", "full", "episode", "podcast",
    "opini", "analisis", "pengamat", "publik", "suara", "tps", "kpu", "bawaslu",
];

const DECORATIONS: &[&str] = &[
    "https://youtu.be/abc123", "www.kanalberita.id/video", "#pilpres2024", "#pemilu", "@kpu_ri",
    "😀", "🔥", "🇮🇩", "!!!", "...",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticSample {
    pub text: String,
    /// Label after noise, the one a dataset file would carry.
    pub label: Sentiment,
    /// Label determined by the planted keywords.
    pub planted: Sentiment,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusSpec {
    pub samples: usize,
    /// Probability that a label is flipped.
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec { samples: 2000, label_noise: 0.1, seed: 2024 }
    }
}

/// Generate a class-balanced corpus (alternating planted labels).
pub fn generate(spec: &CorpusSpec) -> Vec<SyntheticSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.samples)
        .map(|i| {
            let planted = if i % 2 == 0 { Sentiment::Positive } else { Sentiment::Negative };
            let text = description(&mut rng, planted);
            let label = if rng.random_bool(spec.label_noise.clamp(0.0, 1.0)) { planted.other() } else { planted };
            SyntheticSample { text, label, planted }
        })
        .collect()
}

fn description(rng: &mut ChaCha8Rng, planted: Sentiment) -> String {
    let keywords = match planted {
        Sentiment::Positive => POSITIVE_WORDS,
        Sentiment::Negative => NEGATIVE_WORDS,
    };
    let len = rng.random_range(6..=16);
    let mut words: Vec<String> = Vec::with_capacity(len + 4);
    words.push(FIGURES.choose(rng).unwrap().to_string());
    for _ in 0..len {
        words.push(FILLER.choose(rng).unwrap().to_string());
    }
    for _ in 0..rng.random_range(1..=3) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, keywords.choose(rng).unwrap().to_string());
    }
    if rng.random_bool(0.5) {
        let at = rng.random_range(0..=words.len());
        words.insert(at, DECORATIONS.choose(rng).unwrap().to_string());
    }
    if rng.random_bool(0.3) {
        if let Some(first) = words.first_mut() {
            *first = capitalize(first);
        }
    }
    words.join(" ")
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
