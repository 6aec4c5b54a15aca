//! Map fixtures shipped with the crate: four small scenario maps and the
//! four study maps.

use super::MapSpec;

const FIG1: &str = include_str!("../../maps/fig1.toml");
const FIG2: &str = include_str!("../../maps/fig2.toml");
const FIG3: &str = include_str!("../../maps/fig3.toml");
const LINE: &str = include_str!("../../maps/line.toml");

/// The four study maps, by name.
pub const STUDY: [(&str, &str); 4] = [
    ("map-1", include_str!("../../maps/map-1.toml")),
    ("map-2", include_str!("../../maps/map-2.toml")),
    ("map-3", include_str!("../../maps/map-3.toml")),
    ("map-4", include_str!("../../maps/map-4.toml")),
];

fn load(doc: &str) -> MapSpec {
    MapSpec::from_toml(doc).expect("bundled maps are valid")
}

/// One bike with two candidate houses behind a junction.
pub fn fig1() -> MapSpec {
    load(FIG1)
}

/// A base next to two houses of different colors.
pub fn fig2() -> MapSpec {
    load(FIG2)
}

/// A short route through a junction with three houses and a longer route
/// free of ambiguous turns.
pub fn fig3() -> MapSpec {
    load(FIG3)
}

/// Three landmarks in a row with the bike at the far end. Nothing on it is
/// ambiguous.
pub fn line() -> MapSpec {
    load(LINE)
}

pub fn study_maps() -> Vec<(&'static str, MapSpec)> {
    STUDY.iter().map(|&(name, doc)| (name, load(doc))).collect()
}

/// Any bundled map by name.
pub fn by_name(name: &str) -> Option<MapSpec> {
    match name {
        "fig1" => Some(fig1()),
        "fig2" => Some(fig2()),
        "fig3" => Some(fig3()),
        "line" => Some(line()),
        _ => STUDY.iter().find(|(n, _)| *n == name).map(|&(_, doc)| load(doc)),
    }
}
