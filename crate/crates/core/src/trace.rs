//! Structured diagnostics from specialization.

use serde::Serialize;

/// One specializer decision. Serialized as one JSON object per line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    /// `new-specialization`, `cache-hit`, `generalized`, `limit-exceeded`,
    /// `build-failed` or `original`.
    pub event: String,
    pub function: String,
    pub pattern: String,
    pub action: String,
}

impl TraceEvent {
    pub fn new(event: &str, function: &str, pattern: &str, action: &str) -> TraceEvent {
        TraceEvent {
            event: event.to_string(),
            function: function.to_string(),
            pattern: pattern.to_string(),
            action: action.to_string(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trace events serialize")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_line() {
        let e = TraceEvent::new("cache-hit", "ADD3", "(11,#NA,#NA)", "ADD3(11,#NA,#NA)#3");
        assert_eq!(
            e.to_json(),
            r##"{"event":"cache-hit","function":"ADD3","pattern":"(11,#NA,#NA)","action":"ADD3(11,#NA,#NA)#3"}"##
        );
    }
}
