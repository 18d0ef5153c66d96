//! Channel shuffle: view `c = g * n` channels as a `(g, n)` matrix, transpose
//! to `(n, g)` and flatten. Routes each group's outputs across all groups of
//! the next grouped layer.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Permutation taking output channel `i` from input channel
/// `(i mod g) * n + i / g` with `n = c / g`. A bijection on `[0, c)`.
pub fn channel_shuffle_perm(channels: usize, groups: usize) -> Result<Vec<usize>> {
    if groups == 0 || !channels.is_multiple_of(groups) {
        return Err(Error::Divisibility {
            what: "channels",
            value: channels,
            groups,
        });
    }
    let n = channels / groups;
    Ok((0..channels).map(|i| (i % groups) * n + i / groups).collect())
}

/// Applies [`channel_shuffle_perm`] to the channel axis; spatial planes are
/// copied untouched.
pub fn channel_shuffle(x: &Tensor, groups: usize) -> Result<Tensor> {
    let perm = channel_shuffle_perm(x.channels(), groups)?;
    let (n, c, h, w) = x.shape();
    let mut out = Tensor::zeros(n, c, h, w)?;
    for b in 0..n {
        for (dst, &src) in perm.iter().enumerate() {
            out.plane_mut(b, dst).copy_from_slice(x.plane(b, src));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perm_examples() {
        assert_eq!(channel_shuffle_perm(4, 2).unwrap(), vec![0, 2, 1, 3]);
        assert_eq!(channel_shuffle_perm(6, 3).unwrap(), vec![0, 2, 4, 1, 3, 5]);
        assert_eq!(
            channel_shuffle_perm(5, 1).unwrap(),
            (0..5).collect::<Vec<_>>()
        );
    }

    #[test]
    fn perm_rejects_non_divisible() {
        assert!(channel_shuffle_perm(5, 2).is_err());
    }

    #[test]
    fn shuffle_reorders_planes() {
        // Channels [A, B, C, D] with g=2 become [A, C, B, D].
        let x = Tensor::new(
            1,
            4,
            1,
            2,
            vec![0.0, 0.1, 1.0, 1.1, 2.0, 2.1, 3.0, 3.1],
        )
        .unwrap();
        let y = channel_shuffle(&x, 2).unwrap();
        assert_eq!(y.data(), &[0.0, 0.1, 2.0, 2.1, 1.0, 1.1, 3.0, 3.1]);
    }

    #[test]
    fn double_shuffle_is_identity() {
        let x = crate::util::random_tensor(2, 12, 3, 3, 40);
        let y = channel_shuffle(&channel_shuffle(&x, 3).unwrap(), 4).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn single_group_is_identity() {
        let x = crate::util::random_tensor(1, 7, 2, 2, 41);
        assert_eq!(channel_shuffle(&x, 1).unwrap(), x);
    }
}
