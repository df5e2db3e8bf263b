//! The flat key-value defense grammar:
//!
//! ```text
//! decomposition=tensor-train representation=4-mode batch=5 ranks=5,90,3 \
//!     [patch=WxH] [rank-pool=a,b,c;d,e,f] seed=42
//! decomposition=slq [qualities=20,40,60,80] [block=8] seed=42
//! ```
//!
//! Keys may appear in any order, each at most once. `parse_config` validates
//! the result, and `format_config` emits a canonical string such that
//! `parse(format(cfg)) == cfg`.

use lowrank_shield::defense::{Decomposition, DefenseConfig, Representation};
use lowrank_shield::slq::SlqConfig;
use lowrank_shield::{Error, Result};

/// A parsed `--config` value: a tensor defense or the SLQ baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum MethodConfig {
    Tensor(DefenseConfig),
    Slq(SlqConfig),
}

impl MethodConfig {
    pub fn seed(&self) -> u64 {
        match self {
            MethodConfig::Tensor(c) => c.seed,
            MethodConfig::Slq(c) => c.seed,
        }
    }
}

const TENSOR_KEYS: &str = "decomposition, representation, batch, ranks, patch, rank-pool, seed";
const SLQ_KEYS: &str = "decomposition, qualities, block, seed";
const DECOMPOSITIONS: &str = "parafac, tucker, tensor-train, slq";
const REPRESENTATIONS: &str = "3-mode, 3-mode-stacked, 4-mode";

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("config key `{key}`: invalid number `{value}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(|part| {
            part.parse().map_err(|_| {
                Error::config(format!(
                    "config key `{key}`: invalid number `{part}` in list `{value}`"
                ))
            })
        })
        .collect()
}

/// Parses the flat key-value grammar into a validated [`MethodConfig`].
/// Every failure is a config error naming the offending token and the valid
/// alternatives.
pub fn parse_config(s: &str) -> Result<MethodConfig> {
    let mut pairs: Vec<(&str, &str)> = Vec::new();
    for token in s.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            return Err(Error::config(format!(
                "malformed config token `{token}`: expected key=value"
            )));
        };
        if pairs.iter().any(|(k, _)| *k == key) {
            return Err(Error::config(format!("duplicate config key `{key}`")));
        }
        pairs.push((key, value));
    }
    let get = |key: &str| pairs.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);

    let decomposition = get("decomposition").ok_or_else(|| {
        Error::config(format!(
            "missing `decomposition=`; valid decompositions: {DECOMPOSITIONS}"
        ))
    })?;

    if decomposition == "slq" {
        for (key, _) in &pairs {
            if !["decomposition", "qualities", "block", "seed"].contains(key) {
                return Err(Error::config(format!(
                    "unknown config key `{key}` for decomposition=slq; valid keys: {SLQ_KEYS}"
                )));
            }
        }
        let defaults = SlqConfig::default();
        let cfg = SlqConfig {
            qualities: match get("qualities") {
                Some(v) => parse_list("qualities", v)?,
                None => defaults.qualities,
            },
            block: match get("block") {
                Some(v) => parse_number("block", v)?,
                None => defaults.block,
            },
            seed: match get("seed") {
                Some(v) => parse_number("seed", v)?,
                None => 0,
            },
        };
        // SlqConfig validation reports domain errors; at parse time they
        // are usage errors
        cfg.validate()
            .map_err(|e| Error::config(e.to_string()))?;
        return Ok(MethodConfig::Slq(cfg));
    }

    let decomposition = Decomposition::parse(decomposition).ok_or_else(|| {
        Error::config(format!(
            "unknown decomposition `{decomposition}`; valid decompositions: {DECOMPOSITIONS}"
        ))
    })?;
    for (key, _) in &pairs {
        if ![
            "decomposition",
            "representation",
            "batch",
            "ranks",
            "patch",
            "rank-pool",
            "seed",
        ]
        .contains(key)
        {
            return Err(Error::config(format!(
                "unknown config key `{key}`; valid keys: {TENSOR_KEYS}"
            )));
        }
    }
    let representation = get("representation").ok_or_else(|| {
        Error::config(format!(
            "missing `representation=`; valid representations: {REPRESENTATIONS}"
        ))
    })?;
    let representation = Representation::parse(representation).ok_or_else(|| {
        Error::config(format!(
            "unknown representation `{representation}`; valid representations: {REPRESENTATIONS}"
        ))
    })?;
    let cfg = DefenseConfig {
        decomposition,
        representation,
        batch_size: match get("batch") {
            Some(v) => parse_number("batch", v)?,
            None => 1,
        },
        ranks: match get("ranks") {
            Some(v) => parse_list("ranks", v)?,
            None => vec![],
        },
        patch: match get("patch") {
            Some(v) => {
                let Some((pw, ph)) = v.split_once('x') else {
                    return Err(Error::config(format!(
                        "config key `patch`: expected WxH, got `{v}`"
                    )));
                };
                Some((parse_number("patch", pw)?, parse_number("patch", ph)?))
            }
            None => None,
        },
        rank_pool: match get("rank-pool") {
            Some(v) => Some(
                v.split(';')
                    .map(|entry| parse_list("rank-pool", entry))
                    .collect::<Result<Vec<_>>>()?,
            ),
            None => None,
        },
        seed: match get("seed") {
            Some(v) => parse_number("seed", v)?,
            None => 0,
        },
    };
    cfg.validate()?;
    Ok(MethodConfig::Tensor(cfg))
}

fn join<T: ToString>(items: &[T], sep: &str) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(sep)
}

/// Canonical text form; `parse_config(format_config(cfg)) == cfg`.
pub fn format_config(cfg: &MethodConfig) -> String {
    match cfg {
        MethodConfig::Tensor(c) => {
            let mut s = format!(
                "decomposition={} representation={} batch={}",
                c.decomposition.name(),
                c.representation.name(),
                c.batch_size
            );
            if !c.ranks.is_empty() {
                s.push_str(&format!(" ranks={}", join(&c.ranks, ",")));
            }
            if let Some((pw, ph)) = c.patch {
                s.push_str(&format!(" patch={pw}x{ph}"));
            }
            if let Some(pool) = &c.rank_pool {
                let entries: Vec<String> = pool.iter().map(|e| join(e, ",")).collect();
                s.push_str(&format!(" rank-pool={}", entries.join(";")));
            }
            s.push_str(&format!(" seed={}", c.seed));
            s
        }
        MethodConfig::Slq(c) => format!(
            "decomposition=slq qualities={} block={} seed={}",
            join(&c.qualities, ","),
            c.block,
            c.seed
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_best_known_configuration() {
        let cfg =
            parse_config("decomposition=tensor-train representation=4-mode batch=5 ranks=5,90,3 seed=42")
                .unwrap();
        let MethodConfig::Tensor(c) = cfg else {
            panic!("expected tensor config")
        };
        assert_eq!(c.decomposition, Decomposition::TensorTrain);
        assert_eq!(c.representation, Representation::FourMode);
        assert_eq!(c.batch_size, 5);
        assert_eq!(c.ranks, vec![5, 90, 3]);
        assert_eq!(c.patch, None);
        assert_eq!(c.rank_pool, None);
        assert_eq!(c.seed, 42);
    }

    #[test]
    fn key_order_does_not_matter() {
        let a = parse_config("decomposition=tensor-train ranks=40 representation=3-mode batch=1")
            .unwrap();
        let b = parse_config("decomposition=tensor-train representation=3-mode batch=1 ranks=40")
            .unwrap();
        assert_eq!(a, b);
        let MethodConfig::Tensor(c) = a else {
            panic!("expected tensor config")
        };
        assert_eq!(c.ranks, vec![40]);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn parses_rank_pools_and_patches() {
        let cfg = parse_config(
            "decomposition=tensor-train representation=4-mode batch=5 \
             rank-pool=5,40,3;5,50,3;5,60,3 patch=50x50 seed=1",
        )
        .unwrap();
        let MethodConfig::Tensor(c) = cfg else {
            panic!("expected tensor config")
        };
        assert_eq!(
            c.rank_pool,
            Some(vec![vec![5, 40, 3], vec![5, 50, 3], vec![5, 60, 3]])
        );
        assert_eq!(c.patch, Some((50, 50)));
        assert!(c.ranks.is_empty());
    }

    #[test]
    fn parses_slq_with_defaults() {
        let cfg = parse_config("decomposition=slq seed=7").unwrap();
        let MethodConfig::Slq(c) = cfg else {
            panic!("expected slq config")
        };
        assert_eq!(c.qualities, vec![20, 40, 60, 80]);
        assert_eq!(c.block, 8);
        assert_eq!(c.seed, 7);

        let cfg = parse_config("decomposition=slq qualities=30,70 block=4").unwrap();
        let MethodConfig::Slq(c) = cfg else {
            panic!("expected slq config")
        };
        assert_eq!(c.qualities, vec![30, 70]);
        assert_eq!(c.block, 4);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn errors_name_the_valid_tokens() {
        let err = parse_config("decomposition=svd representation=4-mode batch=1 ranks=1,1,1")
            .unwrap_err();
        assert!(err.to_string().contains("parafac, tucker, tensor-train, slq"), "{err}");

        let err = parse_config(
            "decomposition=tensor-train representation=4-mode batch=1 ranks=1,1,1 rank=2",
        )
        .unwrap_err();
        assert!(err.to_string().contains("valid keys"), "{err}");

        let err = parse_config("decomposition=tensor-train representation=flat batch=1 ranks=1")
            .unwrap_err();
        assert!(err.to_string().contains("3-mode, 3-mode-stacked, 4-mode"), "{err}");

        let err = parse_config("decomposition=slq quality=50").unwrap_err();
        assert!(err.to_string().contains(SLQ_KEYS), "{err}");

        assert!(parse_config("decomposition=tensor-train representation=4-mode batch").is_err());
        assert!(parse_config("decomposition=slq decomposition=slq").is_err());
        assert!(parse_config("representation=4-mode").is_err());
        assert!(parse_config(
            "decomposition=tensor-train representation=4-mode batch=1 ranks=1,x,1"
        )
        .is_err());
        assert!(parse_config(
            "decomposition=tensor-train representation=4-mode batch=1 ranks=1,1,1 patch=8"
        )
        .is_err());
    }

    #[test]
    fn structural_validation_happens_at_parse_time() {
        // first TT rank above the batch size is a usage error
        let err = parse_config(
            "decomposition=tensor-train representation=4-mode batch=5 ranks=6,90,3",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        // missing ranks without a pool
        let err =
            parse_config("decomposition=parafac representation=3-mode batch=1").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        // slq quality out of range
        let err = parse_config("decomposition=slq qualities=0").unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
    }

    #[test]
    fn format_then_parse_round_trips() {
        let configs = [
            "decomposition=tensor-train representation=4-mode batch=5 ranks=5,90,3 seed=42",
            "decomposition=parafac representation=3-mode batch=1 ranks=60 seed=0",
            "decomposition=tucker representation=3-mode-stacked batch=30 ranks=105,105,90 seed=3",
            "decomposition=tensor-train representation=4-mode batch=5 patch=50x50 \
             rank-pool=5,40,3;5,50,3;5,60,3 seed=9",
            "decomposition=slq qualities=20,40,60,80 block=8 seed=11",
        ];
        for s in configs {
            let cfg = parse_config(s).unwrap();
            let canonical = format_config(&cfg);
            let reparsed = parse_config(&canonical).unwrap();
            assert_eq!(reparsed, cfg, "round trip failed for `{s}` via `{canonical}`");
            // canonical form is a fixed point
            assert_eq!(format_config(&reparsed), canonical);
        }
    }
}
