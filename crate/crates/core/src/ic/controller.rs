use super::model::{IcSession, ProposalModel};
use crate::error::{Error, Result};
use crate::numerics::{CounterRng, Distribution};
use crate::ppl::{Address, Controller, Proposal};

/// Draws latents from a trained proposal network.
pub struct IcController<'m> {
    session: IcSession<'m>,
    rng: CounterRng,
    warned: std::collections::HashSet<Address>,
}

impl<'m> IcController<'m> {
    pub fn new(model: &'m ProposalModel, summary: &[f64], rng: CounterRng) -> Result<Self> {
        Ok(Self {
            session: IcSession::new(model, summary)?,
            rng,
            warned: Default::default(),
        })
    }
}

impl Controller for IcController<'_> {
    fn propose(&mut self, address: &Address, dist: &Distribution) -> Result<Proposal> {
        let (q, site) = self.session.propose(address, dist)?;
        if site.is_none() && self.warned.insert(address.clone()) {
            log::warn!("no proposal layer for {address}, sampling from the prior");
        }
        let value = q.sample(&mut self.rng);
        let log_q = q.log_prob(value)?;
        if log_q.is_nan() {
            return Err(Error::NonFinite {
                what: "proposal log-density".into(),
                location: address.to_string(),
            });
        }
        self.session.record(site, value)?;
        Ok(Proposal {
            value,
            log_q: Some(log_q),
        })
    }

    fn reset(&mut self) {
        self.session.reset();
    }
}
