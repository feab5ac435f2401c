pub struct Preset {
    pub name: &'static str,
    pub description: &'static str,
    pub toml: &'static str,
}

macro_rules! preset {
    ($name:literal, $desc:literal) => {
        Preset {
            name: $name,
            description: $desc,
            toml: include_str!(concat!("../presets/", $name, ".toml")),
        }
    };
}

pub const PRESETS: &[Preset] = &[
    preset!("fig2a", "level scan over the drive with the (1,1) and (2,2) anticrossings"),
    preset!("fig2d", "closed super-Rabi oscillation |0,0,+> <-> |1,1,->"),
    preset!("fig2e", "closed super-Rabi oscillation |0,0,+> <-> |2,2,->"),
    preset!("fig3ab", "emission spectra and g2 sweeps at both resonances"),
    preset!("fig3cd", "analytic versus gap-extracted transition rates"),
    preset!("fig3ef", "correlated emission counts versus transition rate"),
    preset!("fig4a", "single-photon dissipation trajectory"),
    preset!("fig4b", "two-photon dissipation trajectory"),
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{parse, resolve};

    #[test]
    fn every_preset_resolves() {
        for p in PRESETS {
            let cfg = parse(p.toml).unwrap_or_else(|e| panic!("{}: {e}", p.name));
            resolve(&cfg).unwrap_or_else(|e| panic!("{}: {e}", p.name));
        }
    }
}
