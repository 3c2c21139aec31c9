//! Time sources.
//!
//! Live runs use the system clock. Offline runs use [`ManualClock`], whose
//! time only moves when told to, so stores written by two identical offline
//! invocations are byte-identical.

use std::sync::Mutex;
use std::time::Duration;

use async_trait::async_trait;
use chrono::{DateTime, NaiveDate, TimeZone, Utc};

#[async_trait]
pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;

    /// Waits for `d`. Manual clocks advance instead of blocking.
    async fn sleep(&self, d: Duration);
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

#[async_trait]
impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }

    async fn sleep(&self, d: Duration) {
        tokio::time::sleep(d).await;
    }
}

#[derive(Debug)]
pub struct ManualClock {
    now: Mutex<DateTime<Utc>>,
    slept: Mutex<Vec<Duration>>,
}

impl ManualClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            now: Mutex::new(start),
            slept: Mutex::new(Vec::new()),
        }
    }

    pub fn at_midnight(date: NaiveDate) -> Self {
        Self::new(midnight(date))
    }

    pub fn advance(&self, d: Duration) {
        let mut now = self.now.lock().expect("clock poisoned");
        *now += chrono::Duration::from_std(d).expect("duration out of range");
    }

    pub fn set(&self, t: DateTime<Utc>) {
        *self.now.lock().expect("clock poisoned") = t;
    }

    /// Every sleep requested so far, in order.
    pub fn sleeps(&self) -> Vec<Duration> {
        self.slept.lock().expect("clock poisoned").clone()
    }
}

#[async_trait]
impl Clock for ManualClock {
    fn now(&self) -> DateTime<Utc> {
        *self.now.lock().expect("clock poisoned")
    }

    async fn sleep(&self, d: Duration) {
        self.slept.lock().expect("clock poisoned").push(d);
        self.advance(d);
    }
}

pub fn midnight(date: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("valid midnight"))
}

/// Time left until the next UTC midnight.
pub fn until_next_utc_day(now: DateTime<Utc>) -> Duration {
    let next = midnight(now.date_naive().succ_opt().expect("date in range"));
    (next - now).to_std().unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn manual_clock_advances_on_sleep() {
        let clock = ManualClock::at_midnight(NaiveDate::from_ymd_opt(2024, 5, 9).unwrap());
        clock.sleep(Duration::from_secs(90)).await;
        assert_eq!(clock.now().to_rfc3339(), "2024-05-09T00:01:30+00:00");
        assert_eq!(clock.sleeps(), vec![Duration::from_secs(90)]);
    }

    #[test]
    fn next_day_wait() {
        let t = Utc.with_ymd_and_hms(2024, 5, 9, 23, 59, 0).unwrap();
        assert_eq!(until_next_utc_day(t), Duration::from_secs(60));
    }
}
