//! Candidate e-application: validation and the clear-incorrect-fields rule.

use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Application {
    #[serde(default)]
    pub first_name: String,
    #[serde(default)]
    pub middle_name: String,
    #[serde(default)]
    pub last_name: String,
    #[serde(default)]
    pub address: String,
    #[serde(default)]
    pub pin_code: String,
    /// `YYYY-MM-DD`; kept as text so malformed input can be reported.
    #[serde(default)]
    pub date_of_birth: String,
    #[serde(default)]
    pub gender: String,
}

impl Application {
    pub fn from_toml_str(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn field(&self, field: Field) -> &str {
        match field {
            Field::FirstName => &self.first_name,
            Field::MiddleName => &self.middle_name,
            Field::LastName => &self.last_name,
            Field::Address => &self.address,
            Field::PinCode => &self.pin_code,
            Field::DateOfBirth => &self.date_of_birth,
            Field::Gender => &self.gender,
        }
    }

    pub fn field_mut(&mut self, field: Field) -> &mut String {
        match field {
            Field::FirstName => &mut self.first_name,
            Field::MiddleName => &mut self.middle_name,
            Field::LastName => &mut self.last_name,
            Field::Address => &mut self.address,
            Field::PinCode => &mut self.pin_code,
            Field::DateOfBirth => &mut self.date_of_birth,
            Field::Gender => &mut self.gender,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    FirstName,
    MiddleName,
    LastName,
    Address,
    PinCode,
    DateOfBirth,
    Gender,
}

impl Field {
    pub const ALL: [Field; 7] = [
        Field::FirstName,
        Field::MiddleName,
        Field::LastName,
        Field::Address,
        Field::PinCode,
        Field::DateOfBirth,
        Field::Gender,
    ];

    pub fn mandatory(self) -> bool {
        self != Field::MiddleName
    }

    pub fn label(self) -> &'static str {
        match self {
            Field::FirstName => "First Name",
            Field::MiddleName => "Middle Name",
            Field::LastName => "Last Name",
            Field::Address => "Address",
            Field::PinCode => "PIN Code",
            Field::DateOfBirth => "Date of Birth",
            Field::Gender => "Gender",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorReason {
    BlankMandatory,
    BadGender,
    BadDob,
    BadPin,
}

impl fmt::Display for ErrorReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorReason::BlankMandatory => "mandatory field is blank",
            ErrorReason::BadGender => "incorrect gender",
            ErrorReason::BadDob => "incorrect date of birth",
            ErrorReason::BadPin => "incorrect pin code",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: Field,
    pub reason: ErrorReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub valid: bool,
    pub field_errors: Vec<FieldError>,
}

impl ValidationReport {
    fn from_errors(field_errors: Vec<FieldError>) -> Self {
        Self { valid: field_errors.is_empty(), field_errors }
    }

    pub fn flags(&self, field: Field) -> bool {
        self.field_errors.iter().any(|e| e.field == field)
    }

    /// Pop-up text naming every incorrect field, one per line.
    pub fn popup_text(&self) -> String {
        if self.valid {
            return "All details are correct. Press OK to continue.".to_string();
        }
        let mut out = String::from("Please correct the following:\n");
        for e in &self.field_errors {
            out.push_str(&format!("- {}: {}\n", e.field.label(), e.reason));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationRules {
    /// Accepted genders, compared case-insensitively.
    pub genders: Vec<String>,
    pub minimum_age: u32,
}

impl Default for ValidationRules {
    fn default() -> Self {
        Self {
            genders: vec!["male".into(), "female".into(), "other".into()],
            minimum_age: 18,
        }
    }
}

/// Completed years between `dob` and `today`.
fn age_on(dob: NaiveDate, today: NaiveDate) -> i32 {
    let before_birthday = (today.month(), today.day()) < (dob.month(), dob.day());
    today.year() - dob.year() - i32::from(before_birthday)
}

fn pin_ok(pin: &str) -> bool {
    let bytes = pin.as_bytes();
    bytes.len() == 6 && bytes.iter().all(u8::is_ascii_digit) && bytes[0] != b'0'
}

pub fn validate_application(app: &Application, today: NaiveDate, rules: &ValidationRules) -> ValidationReport {
    let mut errors = Vec::new();
    for field in Field::ALL {
        let value = app.field(field).trim();
        if value.is_empty() {
            if field.mandatory() {
                errors.push(FieldError { field, reason: ErrorReason::BlankMandatory });
            }
            continue;
        }
        let reason = match field {
            Field::Gender if !rules.genders.iter().any(|g| g.eq_ignore_ascii_case(value)) => Some(ErrorReason::BadGender),
            Field::PinCode if !pin_ok(value) => Some(ErrorReason::BadPin),
            Field::DateOfBirth => match NaiveDate::parse_from_str(value, "%Y-%m-%d") {
                Ok(dob) if dob <= today && age_on(dob, today) >= rules.minimum_age as i32 => None,
                _ => Some(ErrorReason::BadDob),
            },
            _ => None,
        };
        if let Some(reason) = reason {
            errors.push(FieldError { field, reason });
        }
    }
    ValidationReport::from_errors(errors)
}

/// Blanks every field named in the report and keeps the rest.
pub fn apply_clearing_rule(app: &Application, report: &ValidationReport) -> Application {
    let mut cleared = app.clone();
    for e in &report.field_errors {
        cleared.field_mut(e.field).clear();
    }
    cleared
}
