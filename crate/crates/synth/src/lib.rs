//! Synthetic tool catalogs with a colloquial/technical vocabulary gap.
//!
//! Tools belong to one of sixteen categories and are described by three of
//! the category's eight technical keywords. Queries name keywords of their
//! gold tools; a fraction of keyword mentions use the lexicon's colloquial
//! phrase instead. The vague split rewrites every keyword colloquially.

mod tables;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use rand::seq::index;
use rand::Rng as _;
use tooldesk_core::catalog::{vaguify, write_corpus, Corpus, Lexicon, QueryExample, Split, Tier, ToolRecord, VaguifyConfig};
use tooldesk_core::rng::{derive_label, rng_from, Rng};
use tooldesk_core::Result;

pub use tables::{BRANDS, CATEGORIES};
use tables::{AUDIENCES, ENTITIES, FILLERS, PARAMS};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_tools: usize,
    pub n_train: usize,
    /// Standard evaluation queries; the vague split has the same size.
    pub n_eval: usize,
    /// Chance that a keyword mention in a standard query is colloquial.
    pub colloquial_rate: f64,
    /// Query tier proportions (G1, G2, G3).
    pub tier_mix: [f64; 3],
    pub seed: u64,
}

impl SynthConfig {
    pub fn fixture() -> Self {
        Self {
            n_tools: 48,
            n_train: 192,
            n_eval: 48,
            colloquial_rate: 0.25,
            tier_mix: [0.5, 0.3, 0.2],
            seed: 11,
        }
    }

    pub fn desk() -> Self {
        Self {
            n_tools: 512,
            n_train: 2000,
            n_eval: 400,
            seed: 500,
            ..Self::fixture()
        }
    }

    pub fn large() -> Self {
        Self {
            n_tools: 10_000,
            n_train: 0,
            n_eval: 400,
            seed: 10_000,
            ..Self::fixture()
        }
    }
}

/// Technical keyword to colloquial phrase, over every category.
pub fn lexicon() -> Lexicon {
    Lexicon::new(
        CATEGORIES
            .iter()
            .flat_map(|(_, _, kws)| kws.iter().map(|(k, c)| (k.to_string(), c.to_string()))),
    )
    .expect("keyword table is duplicate free")
}

pub fn lexicon_tsv() -> String {
    let mut out = String::from("# technical_token\tcolloquial_phrase\n");
    for (k, c) in lexicon().entries() {
        out.push_str(&format!("{k}\t{c}\n"));
    }
    out
}

struct ToolSpec {
    category: usize,
    keywords: [usize; 3],
    verb: usize,
}

fn camel(verb: &str, noun: &str) -> String {
    let mut cs = noun.chars();
    let head = cs.next().map(|c| c.to_ascii_uppercase()).into_iter();
    format!("{verb}{}", head.chain(cs).collect::<String>())
}

fn pick<'a>(rng: &mut Rng, xs: &[&'a str]) -> &'a str {
    xs[rng.random_range(0..xs.len())]
}

fn make_tool(i: usize, spec: &ToolSpec, brand: &str, rng: &mut Rng) -> ToolRecord {
    let (cat, verbs, kws) = &CATEGORIES[spec.category];
    let [k1, k2, k3] = spec.keywords.map(|k| kws[k].0);
    let verb = verbs[spec.verb];
    let tool_description = match rng.random_range(0..3) {
        0 => format!("{brand} provides {k1}, {k2} and {k3} data for {}.", pick(rng, &AUDIENCES)),
        1 => format!("{brand} is a {} service offering {k1} and {k2} with {k3} support.", cat.to_lowercase()),
        _ => format!("A {} toolkit from {brand} covering {k1}, {k2} and {k3}.", cat.to_lowercase()),
    };
    let param = pick(rng, &PARAMS);
    let api_description = match rng.random_range(0..3) {
        0 => format!("{} {k1} and {k2} for a given {param}.", capitalize(verb)),
        1 => format!("Returns {k1} along with {k3} for the requested {param}."),
        _ => format!("Looks up {k1} and {k2} by {param}."),
    };
    ToolRecord {
        id: format!("tool-{i:05}"),
        title: format!("{brand} {cat}"),
        api_name: camel(verb, k1),
        tool_description,
        api_description,
        tier: Tier::ALL[rng.random_range(0..3)],
    }
}

fn capitalize(s: &str) -> String {
    let mut cs = s.chars();
    match cs.next() {
        Some(c) => c.to_uppercase().chain(cs).collect(),
        None => String::new(),
    }
}

fn tools(cfg: &SynthConfig, rng: &mut Rng) -> (Vec<ToolRecord>, Vec<ToolSpec>) {
    let mut seen_triples: HashSet<(usize, [usize; 3])> = HashSet::new();
    let mut seen: HashSet<(usize, [usize; 3], usize)> = HashSet::new();
    let mut records = Vec::with_capacity(cfg.n_tools);
    let mut specs = Vec::with_capacity(cfg.n_tools);
    for i in 0..cfg.n_tools {
        let category = i % CATEGORIES.len();
        let mut attempt = 0;
        let (spec, brand) = loop {
            let mut ks: Vec<usize> = index::sample(rng, 8, 3).into_vec();
            let primary = ks.remove(0);
            ks.sort_unstable();
            let keywords = [primary, ks[0], ks[1]];
            let brand = rng.random_range(0..BRANDS.len());
            let mut canon = keywords;
            canon.sort_unstable();
            attempt += 1;
            // distinct keyword sets while they last, then distinct brands
            if seen_triples.contains(&(category, canon)) && attempt < 50 {
                continue;
            }
            if seen.insert((category, canon, brand)) {
                seen_triples.insert((category, canon));
                let verb = rng.random_range(0..3);
                break (
                    ToolSpec {
                        category,
                        keywords,
                        verb,
                    },
                    brand,
                );
            }
        };
        records.push(make_tool(i, &spec, BRANDS[brand], rng));
        specs.push(spec);
    }
    (records, specs)
}

fn mention(category: usize, keyword: usize, cfg: &SynthConfig, rng: &mut Rng) -> String {
    let (k, c) = CATEGORIES[category].2[keyword];
    if rng.random_bool(cfg.colloquial_rate) {
        c.to_string()
    } else {
        k.to_string()
    }
}

fn query(id: String, split: Split, specs: &[ToolSpec], records: &[ToolRecord], cfg: &SynthConfig, rng: &mut Rng) -> QueryExample {
    let u: f64 = rng.random();
    let tier = if u < cfg.tier_mix[0] {
        Tier::G1
    } else if u < cfg.tier_mix[0] + cfg.tier_mix[1] {
        Tier::G2
    } else {
        Tier::G3
    };
    let t = rng.random_range(0..specs.len());
    let st = &specs[t];
    let a = mention(st.category, st.keywords[0], cfg, rng);
    let b = mention(st.category, st.keywords[1 + rng.random_range(0..2)], cfg, rng);
    let verb = CATEGORIES[st.category].1[st.verb];
    let e = pick(rng, &ENTITIES);
    let mut gold = vec![records[t].id.clone()];
    let text = if tier == Tier::G1 {
        match rng.random_range(0..5) {
            0 => format!("I need the {a} and {b} for {e}"),
            1 => format!("can you {verb} {a} with {b} for {e}"),
            2 => format!("looking for {a} details, especially {b}, for {e}"),
            3 => format!("help me find {b} and {a} info for {e}"),
            _ => format!("{verb} {a} {b} for {e} please"),
        }
    } else {
        let same = tier == Tier::G2;
        let other = loop {
            let u = rng.random_range(0..specs.len());
            if u != t && (specs[u].category == st.category) == same {
                break u;
            }
        };
        gold.push(records[other].id.clone());
        let so = &specs[other];
        let c = mention(so.category, so.keywords[0], cfg, rng);
        match rng.random_range(0..3) {
            0 => format!("I need the {a} and {b} for {e}, then check {c}"),
            1 => format!("first {verb} {a} with {b} for {e} and after that the {c}"),
            _ => format!("show me {a} plus {b} for {e}, and also {c}"),
        }
    };
    QueryExample {
        query_id: id,
        text,
        gold_tool_ids: gold,
        tier,
        split,
    }
}

/// Builds a corpus: tools, train queries, standard evaluation queries and
/// their vague rewrites.
pub fn generate(cfg: &SynthConfig) -> Result<Corpus> {
    let mut rng = rng_from(derive_label(cfg.seed, "tools"));
    let (records, specs) = tools(cfg, &mut rng);
    let mut qrng = rng_from(derive_label(cfg.seed, "queries"));
    let mut queries = Vec::with_capacity(cfg.n_train + 2 * cfg.n_eval);
    for i in 0..cfg.n_train {
        queries.push(query(format!("train-{i:05}"), Split::Train, &specs, &records, cfg, &mut qrng));
    }
    let mut eval = Vec::with_capacity(cfg.n_eval);
    for i in 0..cfg.n_eval {
        eval.push(query(format!("eval-{i:05}"), Split::EvalStandard, &specs, &records, cfg, &mut qrng));
    }
    let lex = lexicon();
    let vcfg = VaguifyConfig {
        fillers: FILLERS.iter().map(|s| s.to_string()).collect(),
        filler_prob: 0.5,
    };
    let mut vrng = rng_from(derive_label(cfg.seed, "vague"));
    let vague: Vec<QueryExample> = eval.iter().map(|q| vaguify(q, &lex, &vcfg, &mut vrng)).collect();
    queries.extend(eval);
    queries.extend(vague);
    Corpus::new(records, queries)
}

/// Writes the lexicon and the three shipped corpora into `dir`.
pub fn write_all(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| tooldesk_core::Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let lex_path = dir.join("lexicon.tsv");
    fs::write(&lex_path, lexicon_tsv()).map_err(|e| tooldesk_core::Error::Io {
        path: lex_path.clone(),
        source: e,
    })?;
    for (name, cfg) in [
        ("fixture.jsonl", SynthConfig::fixture()),
        ("synthetic_500.jsonl", SynthConfig::desk()),
        ("synthetic_10k.jsonl", SynthConfig::large()),
    ] {
        write_corpus(&generate(&cfg)?, dir.join(name))?;
    }
    Ok(())
}
