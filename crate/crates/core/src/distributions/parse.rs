//! Textual distribution specs, e.g. `exp:lambda=1.0`, `erlang:k=2,nu=3.0`,
//! `det:d=1.5`, `hyperexp:p=0.3|0.7,lambda=1.0|5.0`,
//! `mixederlang:mu=2.0,q=0.2|0.8`.

use std::collections::BTreeMap;
use std::str::FromStr;

use crate::error::{Error, Result};

use super::{PrepTimeModel, ServiceTimeModel, TimeLaw};

struct SpecParts<'a> {
    kind: &'a str,
    params: BTreeMap<&'a str, &'a str>,
}

impl<'a> SpecParts<'a> {
    fn split(spec: &'a str) -> Result<Self> {
        let spec = spec.trim();
        let (kind, rest) = spec
            .split_once(':')
            .ok_or_else(|| Error::parse(spec, "expected `<kind>:<key>=<value>,...`"))?;
        let mut params = BTreeMap::new();
        for item in rest.split(',').filter(|s| !s.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::parse(item, "expected `<key>=<value>`"))?;
            if params.insert(k.trim(), v.trim()).is_some() {
                return Err(Error::parse(item, "duplicate key"));
            }
        }
        Ok(Self {
            kind: kind.trim(),
            params,
        })
    }

    /// Removes the first present key among `names` and parses it as a number.
    fn take_num(&mut self, names: &[&'a str]) -> Result<f64> {
        let raw = self.take_raw(names)?;
        parse_num(raw)
    }

    fn take_raw(&mut self, names: &[&'a str]) -> Result<&'a str> {
        for n in names {
            if let Some(v) = self.params.remove(n) {
                return Ok(v);
            }
        }
        Err(Error::parse(
            self.kind,
            format!("missing parameter `{}`", names[0]),
        ))
    }

    fn take_list(&mut self, names: &[&'a str]) -> Result<Vec<f64>> {
        self.take_raw(names)?.split('|').map(parse_num).collect()
    }

    fn finish(self) -> Result<()> {
        match self.params.keys().next() {
            Some(k) => Err(Error::parse(*k, format!("unknown parameter for `{}`", self.kind))),
            None => Ok(()),
        }
    }
}

fn parse_num(raw: &str) -> Result<f64> {
    let raw = raw.trim();
    let v = f64::from_str(raw).map_err(|_| Error::parse(raw, "not a decimal number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(raw, "number must be finite"))
    }
}

fn parse_phases(raw: &str) -> Result<usize> {
    usize::from_str(raw.trim()).map_err(|_| Error::parse(raw, "not a phase count"))
}

fn wrap<T>(token: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::InvalidParameter(msg) => Error::parse(token, msg),
        other => other,
    })
}

impl FromStr for ServiceTimeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = SpecParts::split(s)?;
        let model = match p.kind {
            "exp" => {
                let rate = p.take_num(&["lambda", "rate"])?;
                wrap(s, ServiceTimeModel::exponential(rate))?
            }
            "erlang" => {
                let k = parse_phases(p.take_raw(&["k"])?)?;
                let rate = p.take_num(&["nu", "rate"])?;
                wrap(s, ServiceTimeModel::erlang(k, rate))?
            }
            "det" => {
                let d = p.take_num(&["d"])?;
                wrap(s, ServiceTimeModel::deterministic(d))?
            }
            "hyperexp" => {
                let weights = p.take_list(&["p"])?;
                let rates = p.take_list(&["lambda", "rate"])?;
                wrap(s, ServiceTimeModel::hyper_exponential(weights, rates))?
            }
            other => return Err(Error::parse(other, "unknown service distribution")),
        };
        p.finish()?;
        Ok(model)
    }
}

impl FromStr for PrepTimeModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut p = SpecParts::split(s)?;
        let model = match p.kind {
            "exp" => {
                let rate = p.take_num(&["mu", "lambda", "rate"])?;
                wrap(s, PrepTimeModel::exponential(rate))?
            }
            "erlang" => {
                let k = parse_phases(p.take_raw(&["k"])?)?;
                let rate = p.take_num(&["mu", "nu", "rate"])?;
                wrap(s, PrepTimeModel::erlang(k, rate))?
            }
            "mixederlang" => {
                let rate = p.take_num(&["mu", "rate"])?;
                let q = p.take_list(&["q"])?;
                wrap(s, PrepTimeModel::new(rate, q))?
            }
            other => {
                return Err(Error::parse(
                    other,
                    "preparation times must be exp, erlang or mixederlang",
                ))
            }
        };
        p.finish()?;
        Ok(model)
    }
}

impl FromStr for TimeLaw {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().split_once(':').map(|(k, _)| k.trim()) {
            Some("exp") | Some("erlang") | Some("mixederlang") => {
                PrepTimeModel::from_str(s).map(TimeLaw::Prep)
            }
            _ => ServiceTimeModel::from_str(s).map(TimeLaw::Service),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_grammar_form() {
        assert_eq!(
            "exp:lambda=1.0".parse::<ServiceTimeModel>().unwrap(),
            ServiceTimeModel::Exponential { rate: 1.0 }
        );
        assert_eq!(
            "erlang:k=2,nu=3.0".parse::<ServiceTimeModel>().unwrap(),
            ServiceTimeModel::Erlang { phases: 2, rate: 3.0 }
        );
        assert_eq!(
            "det:d=1.5".parse::<ServiceTimeModel>().unwrap(),
            ServiceTimeModel::Deterministic { value: 1.5 }
        );
        assert_eq!(
            "hyperexp:p=0.3|0.7,lambda=1.0|5.0"
                .parse::<ServiceTimeModel>()
                .unwrap(),
            ServiceTimeModel::HyperExponential {
                weights: vec![0.3, 0.7],
                rates: vec![1.0, 5.0]
            }
        );
        let prep = "mixederlang:mu=2.0,q=0.2|0.8".parse::<PrepTimeModel>().unwrap();
        assert_eq!(prep.weights(), &[0.2, 0.8]);
        assert_eq!(prep.rate(), 2.0);
        let prep = "exp:mu=1".parse::<PrepTimeModel>().unwrap();
        assert!(prep.is_exponential());
    }

    #[test]
    fn errors_name_the_offending_token() {
        let err = "exp:lambda=1,0".parse::<ServiceTimeModel>().unwrap_err();
        assert!(matches!(err, Error::Parse { ref token, .. } if token == "0"), "{err:?}");
        let err = "gamma:k=2".parse::<ServiceTimeModel>().unwrap_err();
        assert!(matches!(err, Error::Parse { ref token, .. } if token == "gamma"));
        let err = "exp:lambda=abc".parse::<ServiceTimeModel>().unwrap_err();
        assert!(matches!(err, Error::Parse { ref token, .. } if token == "abc"));
        let err = "exp:lambda=1,mu=2".parse::<ServiceTimeModel>().unwrap_err();
        assert!(matches!(err, Error::Parse { ref token, .. } if token == "mu"));
        let err = "det:d=1".parse::<PrepTimeModel>().unwrap_err();
        assert!(matches!(err, Error::Parse { ref token, .. } if token == "det"));
        assert!("exp:lambda=-1".parse::<ServiceTimeModel>().is_err());
    }

    #[test]
    fn time_law_dispatches_on_kind() {
        assert!(matches!("det:d=1".parse::<TimeLaw>().unwrap(), TimeLaw::Service(_)));
        assert!(matches!("exp:mu=1".parse::<TimeLaw>().unwrap(), TimeLaw::Prep(_)));
    }
}
