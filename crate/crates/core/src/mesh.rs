//! Uniform periodic meshes on `[0, 2π]`.
//!
//! The coarse mesh has `n_coarse` elements (and as many nodes, since the
//! endpoint is identified with the origin). The fine mesh refines every coarse
//! element into `refine_factor` equal pieces, so coarse node `j` coincides with
//! fine node `j * refine_factor`. Element `e` spans nodes `e` and `e + 1`
//! (mod the node count).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DOMAIN_LENGTH: f64 = 2.0 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Level {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PeriodicGridPair {
    n_coarse: usize,
    refine_factor: usize,
}

impl PeriodicGridPair {
    pub fn new(n_coarse: usize, refine_factor: usize) -> Result<Self> {
        if n_coarse < 4 {
            return Err(Error::InvalidGrid(format!(
                "need at least 4 coarse elements, got {n_coarse}"
            )));
        }
        if refine_factor < 1 {
            return Err(Error::InvalidGrid("refine factor must be positive".into()));
        }
        Ok(Self {
            n_coarse,
            refine_factor,
        })
    }

    /// Grid pair with a prescribed number of fine elements.
    pub fn with_fine_elements(n_coarse: usize, n_fine: usize) -> Result<Self> {
        if n_coarse == 0 || n_fine % n_coarse != 0 {
            return Err(Error::InvalidGrid(format!(
                "{n_fine} fine elements are not a refinement of {n_coarse} coarse elements"
            )));
        }
        Self::new(n_coarse, n_fine / n_coarse)
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn refine_factor(&self) -> usize {
        self.refine_factor
    }

    pub fn n_fine(&self) -> usize {
        self.n_coarse * self.refine_factor
    }

    /// Coarse mesh size `H`.
    pub fn coarse_size(&self) -> f64 {
        DOMAIN_LENGTH / self.n_coarse as f64
    }

    /// Fine mesh size `h`.
    pub fn fine_size(&self) -> f64 {
        DOMAIN_LENGTH / self.n_fine() as f64
    }

    pub fn n_nodes(&self, level: Level) -> usize {
        match level {
            Level::Coarse => self.n_coarse,
            Level::Fine => self.n_fine(),
        }
    }

    pub fn mesh_size(&self, level: Level) -> f64 {
        DOMAIN_LENGTH / self.n_nodes(level) as f64
    }

    pub fn fine_x(&self, i: usize) -> f64 {
        i as f64 * self.fine_size()
    }

    pub fn coarse_x(&self, j: usize) -> f64 {
        j as f64 * self.coarse_size()
    }

    /// Fine node index of coarse node `j`.
    pub fn coarse_to_fine(&self, j: usize) -> usize {
        (j % self.n_coarse) * self.refine_factor
    }

    pub fn fine_coordinates(&self) -> Vec<f64> {
        (0..self.n_fine()).map(|i| self.fine_x(i)).collect()
    }

    /// Oversampling patch `N^m(S_j)` around coarse node `j`.
    pub fn patch(&self, j: usize, m: usize) -> Result<Patch> {
        if j >= self.n_coarse {
            return Err(Error::InvalidParameter(format!(
                "coarse node {j} out of range (n_coarse = {})",
                self.n_coarse
            )));
        }
        let n = self.n_coarse;
        let span = 2 * m + 2;
        let (first_element, n_elements) = if span >= n {
            (0, n)
        } else {
            // elements j-1-m ..= j+m; m + 1 < n here
            ((j + n - (m + 1)) % n, span)
        };
        Ok(Patch {
            center: j,
            layers: m,
            first_element,
            n_elements,
            n_coarse: n,
            refine_factor: self.refine_factor,
        })
    }
}

/// A contiguous ring interval of coarse elements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    center: usize,
    layers: usize,
    first_element: usize,
    n_elements: usize,
    n_coarse: usize,
    refine_factor: usize,
}

impl Patch {
    pub fn center(&self) -> usize {
        self.center
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    /// The patch covers the whole periodic domain.
    pub fn is_saturated(&self) -> bool {
        self.n_elements == self.n_coarse
    }

    pub fn first_element(&self) -> usize {
        self.first_element
    }

    pub fn n_elements(&self) -> usize {
        self.n_elements
    }

    pub fn elements(&self) -> Vec<usize> {
        (0..self.n_elements)
            .map(|k| (self.first_element + k) % self.n_coarse)
            .collect()
    }

    pub fn contains_element(&self, e: usize) -> bool {
        let offset = (e + self.n_coarse - self.first_element) % self.n_coarse;
        offset < self.n_elements
    }

    /// Fine element `e` lies inside the patch.
    pub fn contains_fine_element(&self, e: usize) -> bool {
        self.contains_element(e / self.refine_factor)
    }

    /// First fine node of the closed patch.
    pub fn first_fine_node(&self) -> usize {
        self.first_element * self.refine_factor
    }

    /// Fine nodes of the closed patch, in ring order starting at the left end.
    pub fn fine_nodes(&self) -> Vec<usize> {
        let n_fine = self.n_coarse * self.refine_factor;
        let count = if self.is_saturated() {
            n_fine
        } else {
            self.n_elements * self.refine_factor + 1
        };
        (0..count)
            .map(|k| (self.first_fine_node() + k) % n_fine)
            .collect()
    }

    /// Coarse nodes whose hat functions overlap the patch.
    pub fn coarse_nodes(&self) -> Vec<usize> {
        let count = if self.is_saturated() {
            self.n_coarse
        } else {
            self.n_elements + 1
        };
        (0..count)
            .map(|k| (self.first_element + k) % self.n_coarse)
            .collect()
    }
}
