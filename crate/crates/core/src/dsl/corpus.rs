//! The reference programs exercised by the parser tests and the CLI.

pub const LISTINGS: [(&str, &str); 8] = [
    ("broadcaster_fog_origin", include_str!("../../listings/broadcaster_fog_origin.js")),
    (
        "broadcaster_cloud_origin",
        include_str!("../../listings/broadcaster_cloud_origin.js"),
    ),
    ("broadcaster_rank", include_str!("../../listings/broadcaster_rank.js")),
    ("thermostat", include_str!("../../listings/thermostat.js")),
    ("device_only", include_str!("../../listings/device_only.js")),
    ("load_balanced", include_str!("../../listings/load_balanced.js")),
    ("data_filtering", include_str!("../../listings/data_filtering.js")),
    ("fog_failover", include_str!("../../listings/fog_failover.js")),
];

pub fn listing(name: &str) -> Option<&'static str> {
    LISTINGS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}
