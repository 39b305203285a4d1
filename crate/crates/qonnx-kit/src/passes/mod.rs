//! Graph-to-graph transformations.

mod channels_last;
mod cleanup;
mod fold;
mod shapes;

pub use channels_last::{layout_tags, to_channels_last, to_channels_last_with, LayoutTag};
pub use cleanup::cleanup;
pub use fold::fold_constants;
pub use shapes::{infer_shapes, inferred_shapes, TensorInfo};

/// Per-pass record of what a transformation did.
#[derive(Debug, Clone)]
pub struct PassReport {
    pub pass_name: String,
    pub rewrites_applied: usize,
    pub nodes_before: usize,
    pub nodes_after: usize,
    pub notes: Vec<String>,
}

impl PassReport {
    pub fn new(pass_name: &str, nodes_before: usize) -> Self {
        PassReport {
            pass_name: pass_name.to_string(),
            rewrites_applied: 0,
            nodes_before,
            nodes_after: nodes_before,
            notes: Vec::new(),
        }
    }
}

impl std::fmt::Display for PassReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "pass {}: {} rewrites, {} -> {} nodes",
            self.pass_name, self.rewrites_applied, self.nodes_before, self.nodes_after
        )?;
        for note in &self.notes {
            writeln!(f, "  note: {note}")?;
        }
        Ok(())
    }
}
