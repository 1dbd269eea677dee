//! Segmentation maps: groups of particles sharing an orientation bin.

use serde::Serialize;

/// A keypoint being carried by the particle model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleState {
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub group_id: u32,
    pub bin: u16,
    /// Set once the particle has been clamped to the frame bounds.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Group {
    pub id: u32,
    pub bin: u16,
    pub members: Vec<ParticleState>,
    pub centroid: (f64, f64),
    pub mean_velocity: (f64, f64),
}

impl Group {
    pub fn new(id: u32, bin: u16, members: Vec<ParticleState>) -> Self {
        let mut g = Self {
            id,
            bin,
            members,
            centroid: (0.0, 0.0),
            mean_velocity: (0.0, 0.0),
        };
        g.refresh_stats();
        g
    }

    /// Recomputes centroid and mean velocity from the members.
    pub fn refresh_stats(&mut self) {
        let n = self.members.len();
        if n == 0 {
            self.centroid = (0.0, 0.0);
            self.mean_velocity = (0.0, 0.0);
            return;
        }
        let (mut sx, mut sy, mut svx, mut svy) = (0.0, 0.0, 0.0, 0.0);
        for m in &self.members {
            sx += m.x;
            sy += m.y;
            svx += m.vx;
            svy += m.vy;
        }
        let n = n as f64;
        self.centroid = (sx / n, sy / n);
        self.mean_velocity = (svx / n, svy / n);
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Groups for one frame at processing resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationMap {
    pub frame_index: usize,
    pub width: usize,
    pub height: usize,
    pub groups: Vec<Group>,
}

#[derive(Serialize)]
struct GroupLine {
    frame_index: usize,
    id: u32,
    bin: u16,
    centroid: [f64; 2],
    members: usize,
}

impl SegmentationMap {
    pub fn empty(frame_index: usize, width: usize, height: usize) -> Self {
        Self {
            frame_index,
            width,
            height,
            groups: Vec::new(),
        }
    }

    pub fn particle_count(&self) -> usize {
        self.groups.iter().map(Group::len).sum()
    }

    pub fn group(&self, id: u32) -> Option<&Group> {
        self.groups.iter().find(|g| g.id == id)
    }

    /// Debug dump, one JSON object per group and line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for g in &self.groups {
            let line = GroupLine {
                frame_index: self.frame_index,
                id: g.id,
                bin: g.bin,
                centroid: [g.centroid.0, g.centroid.1],
                members: g.len(),
            };
            out.push_str(&serde_json::to_string(&line).expect("plain struct serializes"));
            out.push('\n');
        }
        out
    }
}
