use serde::{Deserialize, Serialize};

use crate::error::{PixieError, Result};
use crate::params::{ConvInit, ParamLayout, ParamReader};
use crate::tensor::{concat_channels, conv2d, Conv2dParams, PadMode, Tensor4};

const KERNELS: [usize; 3] = [1, 3, 5];

/// Relative channel shares of the 1x1, 3x3 and 5x5 branches.
///
/// The default `[2, 3, 3]` gives a quarter of the channels to the pointwise
/// branch and splits the rest evenly between the two spatial branches. Any
/// rounding remainder goes to the last branch with a nonzero share; a zero
/// share drops the branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MrpeAllocation(pub [u32; 3]);

impl Default for MrpeAllocation {
    fn default() -> Self {
        Self([2, 3, 3])
    }
}

impl MrpeAllocation {
    /// Branch widths for an embedding of `width` channels.
    pub fn widths(&self, width: usize) -> Result<[usize; 3]> {
        let parts = self.0;
        let total: u64 = parts.iter().map(|&p| p as u64).sum();
        if total == 0 {
            return Err(PixieError::Config("MRPE allocation must have a nonzero share".into()));
        }
        let mut widths = parts.map(|p| (width as u64 * p as u64 / total) as usize);
        let assigned: usize = widths.iter().sum();
        let last = parts.iter().rposition(|&p| p > 0).expect("nonzero share");
        widths[last] += width - assigned;
        Ok(widths)
    }
}

/// Multi-receptive-field embedding: parallel 1x1/3x3/5x5 convs, concatenated
/// and mixed by a pointwise projection.
#[derive(Debug, Clone, PartialEq)]
pub struct MrpeParams {
    /// Non-empty branches in kernel order.
    pub branches: Vec<Conv2dParams>,
    pub mix: Conv2dParams,
}

impl MrpeParams {
    pub fn declare(l: &mut ParamLayout, prefix: &str, width: usize, alloc: MrpeAllocation) -> Result<()> {
        for (k, d) in KERNELS.into_iter().zip(alloc.widths(width)?) {
            if d > 0 {
                l.conv(&format!("{prefix}.k{k}"), d, width, k, ConvInit::Uniform);
            }
        }
        l.conv(&format!("{prefix}.mix"), width, width, 1, ConvInit::Uniform);
        Ok(())
    }

    pub fn read(r: &mut ParamReader, prefix: &str, width: usize, alloc: MrpeAllocation) -> Result<Self> {
        let mut branches = Vec::with_capacity(3);
        for (k, d) in KERNELS.into_iter().zip(alloc.widths(width)?) {
            if d > 0 {
                branches.push(r.conv(&format!("{prefix}.k{k}"), d, width, k, 1, PadMode::Reflect)?);
            }
        }
        let mix = r.conv(&format!("{prefix}.mix"), width, width, 1, 1, PadMode::Zeros)?;
        Ok(Self { branches, mix })
    }

    pub fn branch_widths(&self) -> Vec<usize> {
        self.branches.iter().map(Conv2dParams::out_channels).collect()
    }
}

pub fn mrpe_forward(x: &Tensor4, p: &MrpeParams) -> Result<Tensor4> {
    let outs = p
        .branches
        .iter()
        .map(|b| conv2d(x, b))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor4> = outs.iter().collect();
    conv2d(&concat_channels(&refs)?, &p.mix)
}
