use serde::{Deserialize, Serialize};

use super::metrics::Ratio;
use crate::agent::TraceStep;
use crate::tools::Partition;

/// Ordered by precedence: a later variant wins when combining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MtiClass {
    Clean,
    Interrupted,
    FrontLoaded,
    Interleaved,
}

impl MtiClass {
    pub fn is_mti(self) -> bool {
        self != MtiClass::Clean
    }
}

/// Classifies one session's steps by their B/G projection.
pub fn classify_mti(steps: &[&TraceStep]) -> MtiClass {
    let tags: Vec<Partition> = steps
        .iter()
        .filter_map(|s| s.partition)
        .filter(|p| *p != Partition::Terminal)
        .collect();
    let first_g = tags.iter().position(|p| *p == Partition::GraphConstruction);
    let last_b = tags.iter().rposition(|p| *p == Partition::Business);
    let first_b = tags.iter().position(|p| *p == Partition::Business);
    let (Some(first_g), Some(first_b), Some(last_b)) = (first_g, first_b, last_b) else {
        return MtiClass::Clean;
    };
    let g_between = tags[first_b..last_b].contains(&Partition::GraphConstruction);
    if g_between {
        return MtiClass::Interleaved;
    }
    if first_g < first_b {
        return MtiClass::FrontLoaded;
    }
    // B+ then G+: clean only when a finish with an answer came first.
    let g_step = steps
        .iter()
        .position(|s| s.partition == Some(Partition::GraphConstruction))
        .expect("a G tag exists");
    let finished_first = steps[..g_step]
        .iter()
        .any(|s| s.partition == Some(Partition::Terminal) && !s.observation.trim().is_empty());
    if finished_first {
        MtiClass::Clean
    } else {
        MtiClass::Interrupted
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtiSummary {
    pub total: u64,
    pub clean: u64,
    pub mti: u64,
}

impl MtiSummary {
    pub fn rate(&self) -> Ratio {
        Ratio::percent(self.mti, self.total)
    }
}

pub fn mti_rate(classes: impl IntoIterator<Item = MtiClass>) -> MtiSummary {
    let mut s = MtiSummary { total: 0, clean: 0, mti: 0 };
    for c in classes {
        s.total += 1;
        if c.is_mti() {
            s.mti += 1;
        } else {
            s.clean += 1;
        }
    }
    s
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::llm::Usage;
    use serde_json::Map;

    pub(crate) fn step(tag: char) -> TraceStep {
        let (action, partition, observation) = match tag {
            'B' => ("add", Partition::Business, "3"),
            'G' => ("add_edge", Partition::GraphConstruction, "ok"),
            'F' => ("finish", Partition::Terminal, "3"),
            _ => unreachable!(),
        };
        TraceStep {
            index: 0,
            reasoning: String::new(),
            action: action.into(),
            args: Map::new(),
            args_str: String::new(),
            observation: observation.into(),
            ok: true,
            partition: Some(partition),
            usage: Usage::default(),
            format_retries: 0,
            tool_retries: 0,
        }
    }

    fn classify(pattern: &str) -> MtiClass {
        let steps: Vec<TraceStep> = pattern.chars().map(step).collect();
        classify_mti(&steps.iter().collect::<Vec<_>>())
    }

    #[test]
    fn definition_fixtures() {
        assert_eq!(classify("BBFGG"), MtiClass::Clean);
        assert_eq!(classify("BGB"), MtiClass::Interleaved);
        assert_eq!(classify("BBGG"), MtiClass::Interrupted);
        assert_eq!(classify("GGB"), MtiClass::FrontLoaded);
        assert_eq!(classify("GBGB"), MtiClass::Interleaved);
        assert_eq!(classify(""), MtiClass::Clean);
        assert_eq!(classify("BBF"), MtiClass::Clean);
        assert_eq!(classify("GGF"), MtiClass::Clean);
    }

    #[test]
    fn rates() {
        let classes = std::iter::repeat_n(MtiClass::Clean, 194).chain(std::iter::repeat_n(MtiClass::Interleaved, 6));
        let s = mti_rate(classes);
        assert_eq!((s.total, s.clean, s.mti), (200, 194, 6));
        assert_eq!(s.rate().round(1), "3.0");
        assert_eq!(mti_rate([]).rate().round(1), "0.0");
    }
}
