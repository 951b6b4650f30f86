//! Plain-text result card.

use chrono::NaiveDateTime;
use thiserror::Error;

use super::application::Field;
use super::session::{SessionStatus, TestSession};

#[derive(Debug, Error, PartialEq)]
pub enum CardError {
    #[error("session {id} has no verdict yet ({status})")]
    NoVerdict { id: String, status: SessionStatus },
}

const RULE: &str = "==============================================";

/// Renders the card for a session with a verdict. Output depends only on the
/// arguments.
pub fn render_result_card(session: &TestSession, issued_at: NaiveDateTime) -> Result<String, CardError> {
    if !session.status.is_terminal() {
        return Err(CardError::NoVerdict { id: session.id.clone(), status: session.status });
    }
    let mut out = String::new();
    let mut line = |label: &str, value: &str| {
        out.push_str(&format!("{label:<15}: {value}\n"));
    };
    line("Date", &issued_at.format("%d-%m-%Y").to_string());
    line("Time", &issued_at.format("%H:%M:%S").to_string());
    line("Session", &session.id);
    line("Test Status", session.status_text());
    if session.status == SessionStatus::Failed {
        line("Reason", session.banner());
    }
    for w in &session.warnings {
        line("Note", w);
    }
    let body = out;

    let mut card = String::new();
    card.push_str(RULE);
    card.push_str("\n        DRIVING SKILL TEST RESULT CARD\n");
    card.push_str(RULE);
    card.push('\n');
    card.push_str(&body);
    card.push_str("----------------------------------------------\n");
    for field in Field::ALL {
        card.push_str(&format!("{:<15}: {}\n", field.label(), session.application.field(field)));
    }
    card.push_str(RULE);
    card.push('\n');
    Ok(card)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::application::Application;
    use crate::evaluation::session::{FailReason, StopPolicy};
    use chrono::NaiveDate;

    fn clock() -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2024, 6, 1).unwrap().and_hms_opt(10, 5, 9).unwrap()
    }

    fn session() -> TestSession {
        let app = Application {
            first_name: "Anu".into(),
            middle_name: "Mary".into(),
            last_name: "Joseph".into(),
            address: "12 Temple Road, Kottayam".into(),
            pin_code: "686101".into(),
            date_of_birth: "1999-03-14".into(),
            gender: "female".into(),
        };
        let mut s = TestSession::register("000042", app, clock());
        s.start().unwrap();
        s
    }

    const PASSED_CARD: &str = "\
==============================================
        DRIVING SKILL TEST RESULT CARD
==============================================
Date           : 01-06-2024
Time           : 10:05:09
Session        : 000042
Test Status    : TEST PASSED
----------------------------------------------
First Name     : Anu
Middle Name    : Mary
Last Name      : Joseph
Address        : 12 Temple Road, Kottayam
PIN Code       : 686101
Date of Birth  : 1999-03-14
Gender         : female
==============================================
";

    #[test]
    fn passed_card_golden() {
        let mut s = session();
        s.gate_count = 8;
        s.stop(30.0, StopPolicy::default(), None).unwrap();
        let card = render_result_card(&s, clock()).unwrap();
        assert_eq!(card, PASSED_CARD);
        assert!(card.contains("TEST PASSED"));
        assert!(card.contains("Date of Birth  : 1999-03-14"));
    }

    #[test]
    fn failed_card_has_reason() {
        let mut s = session();
        s.record_failure(FailReason::VehicleHalt, 4.2, None);
        let card = render_result_card(&s, clock()).unwrap();
        assert!(card.contains("Test Status    : TEST FAILED\n"));
        assert!(card.contains("Reason         : VEHICLE HALT – TEST FINISHED\n"));
    }

    #[test]
    fn rendering_is_pure() {
        let mut s = session();
        s.record_failure(FailReason::SensorsMisaligned, 1.0, None);
        assert_eq!(render_result_card(&s, clock()), render_result_card(&s, clock()));
    }

    #[test]
    fn no_card_without_verdict() {
        assert!(matches!(render_result_card(&session(), clock()), Err(CardError::NoVerdict { .. })));
    }
}
