use crate::config::Config;
use crate::descriptor::{ComponentLabeler, ComponentMap, DescriptorField, SizeDescriptor};
use crate::error::Result;
use crate::event::{DescriptorHistory, EventField, EventState};
use crate::frame::{Frame, Geometry};
use crate::motion::{BackgroundModel, LabelField};

/// Streaming motion → descriptor → event chain for one video.
///
/// The background is seeded with the first frame, which is then processed
/// like any other (its labels are all zero).
#[derive(Debug, Clone)]
pub struct Pipeline {
    config: Config,
    geometry: Geometry,
    background: Option<BackgroundModel>,
    events: EventState,
    labeler: ComponentLabeler,
    sizer: SizeDescriptor,
    labels: LabelField,
    components: ComponentMap,
    descriptors: DescriptorField,
}

impl Pipeline {
    pub fn new(geometry: Geometry, config: &Config, history: DescriptorHistory) -> Result<Self> {
        config.validate()?;
        let scale = config.descriptor.scale();
        Ok(Pipeline {
            config: config.clone(),
            geometry,
            background: None,
            events: EventState::new(geometry, config.event.w, history)?,
            labeler: ComponentLabeler::new(),
            sizer: SizeDescriptor::new(),
            labels: LabelField::empty(geometry, 0),
            components: ComponentMap::empty(geometry),
            descriptors: DescriptorField::zeros(geometry, 0, scale),
        })
    }

    pub fn config(&self) -> &Config {
        &self.config
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn describe_current(&mut self) -> Result<()> {
        let conn = self.config.descriptor.connectivity;
        self.labeler
            .label_into(&self.labels, conn, &mut self.components)?;
        self.sizer.compute_into(
            &self.labels,
            &self.components,
            self.config.descriptor.n,
            &mut self.descriptors,
        )
    }

    pub fn push(&mut self, frame: &Frame) -> Result<()> {
        self.geometry.ensure_same(frame.geometry())?;
        if self.events.history() == DescriptorHistory::LabelsOnly
            && self.events.oldest_labels(&mut self.labels)?
        {
            self.describe_current()?;
            self.events.retire_oldest(&self.descriptors)?;
        }
        let background = match &mut self.background {
            Some(b) => b,
            None => self
                .background
                .insert(BackgroundModel::init(frame, self.config.rho, self.config.tau)?),
        };
        background.step_into(frame, &mut self.labels)?;
        self.describe_current()?;
        self.events.push(&self.labels, &self.descriptors)
    }

    pub fn is_warm(&self) -> bool {
        self.events.is_warm()
    }

    pub fn statistic(&self) -> Result<EventField> {
        self.events.statistic(&self.config.event)
    }

    pub fn statistic_into(&self, out: &mut EventField) -> Result<()> {
        self.events.statistic_into(&self.config.event, out)
    }

    /// Labels of the most recent frame.
    pub fn labels(&self) -> &LabelField {
        &self.labels
    }

    pub fn components(&self) -> &ComponentMap {
        &self.components
    }

    /// Descriptors of the most recent frame.
    pub fn descriptors(&self) -> &DescriptorField {
        &self.descriptors
    }

    pub fn events(&self) -> &EventState {
        &self.events
    }

    pub fn background(&self) -> Option<&BackgroundModel> {
        self.background.as_ref()
    }

    /// Heap bytes carried from one frame to the next.
    pub fn state_bytes(&self) -> usize {
        self.events.heap_bytes() + self.background.as_ref().map_or(0, |b| b.heap_bytes())
    }

    /// Heap bytes of per-frame working buffers, rewritten on every push.
    pub fn scratch_bytes(&self) -> usize {
        self.labels.bits.capacity()
            + self.components.ids.capacity() * std::mem::size_of::<u32>()
            + self.descriptors.counts.capacity() * std::mem::size_of::<u16>()
            + self.labeler.heap_bytes()
            + self.sizer.heap_bytes()
    }
}
