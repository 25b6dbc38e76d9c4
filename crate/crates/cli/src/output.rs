//! Report assembly. Every number goes through [`num`], which prints twelve
//! significant digits.

use std::fmt::Write as _;

use clap::ValueEnum;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Text,
    Csv,
}

pub fn num(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{:.11e}", x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..12).contains(&exp) {
        let fixed = format!("{:.*}", (11 - exp) as usize, x);
        trim_zeros(&fixed).to_string()
    } else {
        format!("{}e{}", trim_zeros(mantissa), exp)
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_else(|| "NA".into())
}

pub fn list(xs: &[f64]) -> String {
    xs.iter().map(|&x| num(x)).collect::<Vec<_>>().join(" ")
}

enum Section {
    Scalars(Vec<(String, String)>),
    Table {
        name: String,
        header: Vec<String>,
        rows: Vec<Vec<String>>,
    },
}

pub struct Report {
    format: Format,
    preamble: Vec<String>,
    sections: Vec<Section>,
}

impl Report {
    pub fn new(format: Format, command: &str, config: &impl Serialize) -> Self {
        let config = serde_json::to_string(config).expect("configs serialize");
        Report {
            format,
            preamble: vec![
                format!("ising-clt {}", env!("CARGO_PKG_VERSION")),
                format!("command: {command}"),
                format!("config: {config}"),
            ],
            sections: Vec::new(),
        }
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.preamble.push(line.into());
    }

    pub fn scalar(&mut self, key: &str, value: impl Into<String>) {
        match self.sections.last_mut() {
            Some(Section::Scalars(v)) => v.push((key.into(), value.into())),
            _ => self
                .sections
                .push(Section::Scalars(vec![(key.into(), value.into())])),
        }
    }

    pub fn value(&mut self, key: &str, value: f64) {
        self.scalar(key, num(value));
    }

    pub fn table(&mut self, name: &str, header: &[&str], rows: Vec<Vec<String>>) {
        self.sections.push(Section::Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows,
        });
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.preamble {
            let _ = writeln!(out, "# {line}");
        }
        for section in &self.sections {
            match (section, self.format) {
                (Section::Scalars(values), Format::Text) => {
                    for (k, v) in values {
                        let _ = writeln!(out, "{k} = {v}");
                    }
                }
                (Section::Scalars(values), Format::Csv) => {
                    let _ = writeln!(out, "key,value");
                    for (k, v) in values {
                        let _ = writeln!(out, "{k},{v}");
                    }
                }
                (Section::Table { name, header, rows }, format) => {
                    let sep = if format == Format::Csv { "," } else { " " };
                    let _ = writeln!(out, "# table: {name}");
                    let _ = writeln!(out, "{}", header.join(sep));
                    for row in rows {
                        let _ = writeln!(out, "{}", row.join(sep));
                    }
                }
            }
        }
        out
    }
}
