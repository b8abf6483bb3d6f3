use crate::error::{Error, Result};
use crate::seed::hash64;

/// Layer shapes of the conv → ReLU → max-pool → dense classifier.
///
/// Every agent in a network shares one architecture; parameter vectors and
/// messages carry its [`fingerprint`](Self::fingerprint) so that mismatches
/// are caught at the boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelArchitecture {
    pub input_channels: usize,
    pub window_length: usize,
    pub conv_out_channels: usize,
    pub conv_kernel: usize,
    pub pool_kernel: usize,
    pub num_classes: usize,
}

impl ModelArchitecture {
    pub const DEFAULT_WINDOW_LENGTH: usize = 100;
    pub const DEFAULT_CONV_OUT_CHANNELS: usize = 64;
    pub const DEFAULT_CONV_KERNEL: usize = 3;
    pub const DEFAULT_POOL_KERNEL: usize = 2;

    /// Default layer sizes for the given input and label spaces.
    pub fn with_defaults(input_channels: usize, num_classes: usize) -> Self {
        Self {
            input_channels,
            window_length: Self::DEFAULT_WINDOW_LENGTH,
            conv_out_channels: Self::DEFAULT_CONV_OUT_CHANNELS,
            conv_kernel: Self::DEFAULT_CONV_KERNEL,
            pool_kernel: Self::DEFAULT_POOL_KERNEL,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonzero = [
            ("input_channels", self.input_channels),
            ("window_length", self.window_length),
            ("conv_out_channels", self.conv_out_channels),
            ("conv_kernel", self.conv_kernel),
            ("pool_kernel", self.pool_kernel),
            ("num_classes", self.num_classes),
        ];
        for (name, v) in nonzero {
            if v == 0 {
                return Err(Error::Architecture(format!("{name} must be positive")));
            }
        }
        if self.window_length < self.conv_kernel {
            return Err(Error::Architecture(format!(
                "window_length {} shorter than conv_kernel {}",
                self.window_length, self.conv_kernel
            )));
        }
        if self.pool_output_length() == 0 {
            return Err(Error::Architecture(format!(
                "conv output length {} shorter than pool_kernel {}",
                self.conv_output_length(),
                self.pool_kernel
            )));
        }
        Ok(())
    }

    /// Valid convolution, stride 1.
    pub fn conv_output_length(&self) -> usize {
        self.window_length + 1 - self.conv_kernel
    }

    pub fn pool_output_length(&self) -> usize {
        self.conv_output_length() / self.pool_kernel
    }

    pub fn dense_input_size(&self) -> usize {
        self.conv_out_channels * self.pool_output_length()
    }

    pub fn conv_weight_count(&self) -> usize {
        self.conv_kernel * self.input_channels * self.conv_out_channels
    }

    pub fn dense_weight_count(&self) -> usize {
        self.dense_input_size() * self.num_classes
    }

    /// Total parameter count `p`.
    pub fn param_count(&self) -> usize {
        self.conv_weight_count()
            + self.conv_out_channels
            + self.dense_weight_count()
            + self.num_classes
    }

    /// Field-wise hash used to detect architecture mismatches on the wire.
    pub fn fingerprint(&self) -> u64 {
        let mut bytes = Vec::with_capacity(6 * 8);
        for v in [
            self.input_channels,
            self.window_length,
            self.conv_out_channels,
            self.conv_kernel,
            self.pool_kernel,
            self.num_classes,
        ] {
            bytes.extend_from_slice(&(v as u64).to_le_bytes());
        }
        hash64(&bytes)
    }
}
