use crate::data::RawSession;
use crate::error::{Error, Result};

/// The 19 scalp electrodes of the 10/20 montage, in the fixed global order
/// used for every dataset. Row `i` of a standardized sequence always holds
/// `TARGET_CHANNELS[i]`.
pub const TARGET_CHANNELS: [&str; 19] = [
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T7", "C3", "Cz", "C4", "T8", "P7", "P3", "Pz",
    "P4", "P8", "O1", "O2",
];

/// Old 10/20 names and off-montage sites mapped onto a target electrode.
const ALIASES: [(&str, &str); 5] = [
    ("T3", "T7"),
    ("T4", "T8"),
    ("T5", "P7"),
    ("T6", "P8"),
    // Frontopolar midline site, folded onto the nearest frontopolar target.
    ("FPZ", "FP1"),
];

/// Reduces a source label to a bare upper-case electrode name:
/// `"EEG Fpz-Cz"` → `"FPZ"`, `"C3-REF"` → `"C3"`, `"Fc5."` → `"FC5"`,
/// `"T3"` → `"T7"`.
pub fn normalize_label(label: &str) -> String {
    let mut s = label.trim().to_ascii_uppercase();
    for prefix in ["EEG ", "EEG-", "EEG_"] {
        if let Some(rest) = s.strip_prefix(prefix) {
            s = rest.trim().to_string();
        }
    }
    if let Some((active, _)) = s.split_once('-') {
        s = active.trim().to_string();
    }
    let s = s.trim_end_matches('.').to_string();
    ALIASES
        .iter()
        .find(|(from, _)| *from == s)
        .map(|(_, to)| to.to_string())
        .unwrap_or(s)
}

/// Assignment of source channels to the 19 targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelMap {
    /// Source channel index for each target, `None` when missing.
    pub assignment: [Option<usize>; 19],
}

impl ChannelMap {
    pub fn targets(&self) -> &'static [&'static str; 19] {
        &TARGET_CHANNELS
    }

    pub fn missing(&self) -> usize {
        self.assignment.iter().filter(|a| a.is_none()).count()
    }

    pub fn present(&self) -> usize {
        19 - self.missing()
    }
}

/// Resolves each target electrode to at most one source channel.
/// Channels that match no target (EOG, references, auxiliaries) are ignored.
pub fn map_channels(session: &RawSession) -> Result<ChannelMap> {
    map_labels(session.channels.iter().map(|c| c.label.as_str()))
}

pub fn map_labels<'a>(labels: impl IntoIterator<Item = &'a str>) -> Result<ChannelMap> {
    let mut assignment = [None; 19];
    for (src, label) in labels.into_iter().enumerate() {
        let norm = normalize_label(label);
        let Some(ti) = TARGET_CHANNELS
            .iter()
            .position(|t| t.eq_ignore_ascii_case(&norm))
        else {
            continue;
        };
        if let Some(prev) = assignment[ti] {
            return Err(Error::ChannelMap(format!(
                "target {} resolved twice (source channels {prev} and {src})",
                TARGET_CHANNELS[ti]
            )));
        }
        assignment[ti] = Some(src);
    }
    Ok(ChannelMap { assignment })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_montage_is_identity() {
        let m = map_labels(TARGET_CHANNELS).unwrap();
        assert_eq!(m.missing(), 0);
        for (i, a) in m.assignment.iter().enumerate() {
            assert_eq!(*a, Some(i));
        }
    }

    #[test]
    fn sleep_bipolar_pair() {
        let m = map_labels([
            "EEG Fpz-Cz",
            "EEG Pz-Oz",
            "EOG horizontal",
            "Resp oro-nasal",
        ])
        .unwrap();
        assert_eq!(m.missing(), 17);
        assert_eq!(m.assignment[14], Some(1)); // Pz
        assert_eq!(m.assignment[0], Some(0)); // Fpz folded onto Fp1
    }

    #[test]
    fn legacy_temporal_names() {
        let m = map_labels(["T3", "T4", "T5", "T6"]).unwrap();
        assert_eq!(m.assignment[7], Some(0));
        assert_eq!(m.assignment[11], Some(1));
        assert_eq!(m.assignment[12], Some(2));
        assert_eq!(m.assignment[16], Some(3));
    }

    #[test]
    fn label_normalization() {
        assert_eq!(normalize_label("Fc5."), "FC5");
        assert_eq!(normalize_label("EEG C3-REF"), "C3");
        assert_eq!(normalize_label(" t3 "), "T7");
    }

    #[test]
    fn duplicate_resolution_is_an_error() {
        assert!(matches!(
            map_labels(["T3", "T7"]),
            Err(Error::ChannelMap(_))
        ));
        assert!(map_labels(["Cz", "CZ-REF"]).is_err());
    }
}
