use std::future::Future;

use crate::config::RetryPolicy;
use crate::provider::ProviderResult;

/// Result of a retried request plus how many attempts it took.
#[derive(Debug, Clone, PartialEq)]
pub struct Attempted<T> {
    pub result: ProviderResult<T>,
    pub attempts: u32,
}

/// Calls `op` until it returns something other than a transient error or
/// `policy.max_attempts` is reached, sleeping the policy's backoff in between.
pub async fn with_retry<T, F, Fut>(policy: &RetryPolicy, label: &str, mut op: F) -> Attempted<T>
where
    F: FnMut() -> Fut,
    Fut: Future<Output = ProviderResult<T>>,
{
    let max = policy.max_attempts.max(1);
    let mut attempt = 1;
    loop {
        let result = op().await;
        match result {
            ProviderResult::TransientError(ref detail) if attempt < max => {
                let wait = policy.backoff(attempt);
                log::warn!("{label}: attempt {attempt}/{max} failed ({detail}); retrying in {wait:?}");
                if !wait.is_zero() {
                    tokio::time::sleep(wait).await;
                }
                attempt += 1;
            }
            _ => {
                return Attempted {
                    result,
                    attempts: attempt,
                }
            }
        }
    }
}
