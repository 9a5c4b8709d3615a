//! Site-by-time matrices and the regular time grid they live on.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Row-major `sites × steps` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeries<T> {
    sites: usize,
    steps: usize,
    data: Vec<T>,
}

impl<T: Copy> SiteSeries<T> {
    pub fn filled(sites: usize, steps: usize, value: T) -> Self {
        Self {
            sites,
            steps,
            data: vec![value; sites * steps],
        }
    }

    pub fn from_vec(sites: usize, steps: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != sites * steps {
            return Err(Error::DimensionMismatch {
                expected: (sites, steps),
                got: (data.len(), 1),
            });
        }
        Ok(Self { sites, steps, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let sites = rows.len();
        let steps = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(sites * steps);
        for row in rows {
            if row.len() != steps {
                return Err(Error::DimensionMismatch {
                    expected: (sites, steps),
                    got: (sites, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self { sites, steps, data })
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.sites, self.steps)
    }

    pub fn get(&self, site: usize, step: usize) -> T {
        self.data[site * self.steps + step]
    }

    pub fn set(&mut self, site: usize, step: usize, value: T) {
        self.data[site * self.steps + step] = value;
    }

    pub fn row(&self, site: usize) -> &[T] {
        &self.data[site * self.steps..(site + 1) * self.steps]
    }

    pub fn row_mut(&mut self, site: usize) -> &mut [T] {
        &mut self.data[site * self.steps..(site + 1) * self.steps]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        (0..self.sites).map(move |i| self.row(i))
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> SiteSeries<U> {
        SiteSeries {
            sites: self.sites,
            steps: self.steps,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// Regular time grid: `origin` in Unix seconds (UTC), fixed step in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeGrid {
    pub origin: i64,
    pub step_minutes: u32,
}

impl TimeGrid {
    pub fn new(origin: i64, step_minutes: u32) -> Self {
        Self {
            origin,
            step_minutes,
        }
    }

    pub fn step_secs(&self) -> i64 {
        i64::from(self.step_minutes) * 60
    }

    /// Start of step `t` in Unix seconds.
    pub fn time_of(&self, t: usize) -> i64 {
        self.origin + t as i64 * self.step_secs()
    }

    /// Hour of day in `1..=24` for step `t`; hour 0 maps to 24. Steps within
    /// one clock hour share the same value.
    pub fn hour_of_day(&self, t: usize) -> u32 {
        let h = self.time_of(t).rem_euclid(86_400) / 3_600;
        if h == 0 {
            24
        } else {
            h as u32
        }
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self::new(0, 15)
    }
}
