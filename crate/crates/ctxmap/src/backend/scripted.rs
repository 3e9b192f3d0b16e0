use std::sync::atomic::{AtomicU64, Ordering};

use ctxmap_core::chat::{ChatRequest, ChatResponse};
use ctxmap_core::cost::Pricing;
use ctxmap_core::document::QaItem;
use ctxmap_core::scripted::{fact_table, scripted_answer, FactTable, ScriptedBiasModel};

use super::{Backend, LlmError};

/// Offline backend answering with [`ScriptedBiasModel`]. Usage is measured
/// with the engine tokenizer.
#[derive(Debug)]
pub struct ScriptedBackend {
    model: ScriptedBiasModel,
    facts: FactTable,
    pricing: Pricing,
    calls: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(model: ScriptedBiasModel, facts: FactTable) -> Result<Self, LlmError> {
        model.validate().map_err(|e| LlmError::Config(e.to_string()))?;
        Ok(Self { model, facts, pricing: Pricing::default(), calls: AtomicU64::new(0) })
    }

    pub fn for_items<'a>(model: ScriptedBiasModel, items: impl IntoIterator<Item = &'a QaItem>) -> Result<Self, LlmError> {
        Self::new(model, fact_table(items))
    }

    pub fn with_pricing(mut self, pricing: Pricing) -> Self {
        self.pricing = pricing;
        self
    }

    pub fn model(&self) -> &ScriptedBiasModel {
        &self.model
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate().map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        scripted_answer(&self.model, request, &self.facts).map_err(|e| LlmError::Scripted(e.to_string()))
    }

    fn pricing(&self) -> Pricing {
        self.pricing
    }

    fn name(&self) -> String {
        format!("scripted(s={}, seed={})", self.model.spotlight_window, self.model.seed)
    }
}
