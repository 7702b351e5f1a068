//! Blocking JSON-over-HTTP client shared by the remote embedding and
//! generation backends.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("semaphore poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore poisoned") += 1;
        self.0.cv.notify_one();
    }
}

#[derive(Debug)]
pub(crate) struct JsonClient {
    agent: ureq::Agent,
    endpoint: String,
    bearer: Option<String>,
    gate: Semaphore,
}

impl JsonClient {
    pub(crate) fn new(endpoint: &str, bearer: Option<String>, timeout_ms: u64, max_in_flight: usize) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(timeout_ms.max(1)))
            .build();
        Self {
            agent,
            endpoint: endpoint.to_string(),
            bearer,
            gate: Semaphore::new(max_in_flight),
        }
    }

    /// POSTs `body`; any transport failure, non-2xx status or undecodable
    /// response becomes [`Error::RemoteUnavailable`].
    pub(crate) fn post<B: Serialize, R: DeserializeOwned>(&self, body: &B) -> Result<R> {
        let _permit = self.gate.acquire();
        let mut req = self.agent.post(&self.endpoint);
        if let Some(token) = &self.bearer {
            req = req.set("Authorization", &format!("Bearer {token}"));
        }
        let resp = req.send_json(body).map_err(|e| match e {
            ureq::Error::Status(code, _) => Error::RemoteUnavailable(format!("HTTP {code}")),
            ureq::Error::Transport(t) => Error::RemoteUnavailable(t.to_string()),
        })?;
        resp.into_json::<R>()
            .map_err(|e| Error::RemoteUnavailable(format!("malformed response: {e}")))
    }
}
