/// A bundled experiment configuration.
#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub json: &'static str,
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "paper-suite",
        description: "step identity, dilation, transform, L^p grid, step convergence and L log L chain on one seeded chain",
        json: include_str!("../../presets/paper-suite.json"),
    },
    Preset {
        name: "imaginary-powers",
        description: "A^{i gamma} for gamma in {0.5, 1, 2}: symbol accuracy and operator norms",
        json: include_str!("../../presets/imaginary-powers.json"),
    },
    Preset {
        name: "davis-family",
        description: "L log L chain ratios over a seeded 20 x 20 family and its doubling",
        json: include_str!("../../presets/davis-family.json"),
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::{parse, Experiment};

    #[test]
    fn every_preset_validates() {
        for p in PRESETS {
            let cfg = parse(p.json).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            assert_eq!(cfg.name, p.name);
            Experiment::build(cfg).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }

    #[test]
    fn listing_is_stable() {
        let a = crate::cli::list_presets();
        assert!(a.contains("paper-suite"));
        assert_eq!(a, crate::cli::list_presets());
        assert_eq!(a.lines().count(), PRESETS.len());
    }
}
