use crate::error::{Error, Result};

use super::{GrayImage, Kernel2D};

/// How samples outside the image are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Border {
    /// Out-of-frame samples are 0; output keeps the input size.
    Zero,
    /// Out-of-frame samples repeat the nearest edge pixel; output keeps the input size.
    Replicate,
    /// Only positions where the kernel fits; output shrinks by (rows-1, cols-1).
    Valid,
}

#[inline]
pub(crate) fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

/// 2-D cross-correlation: `out(r, c) = sum_{u,v} k(u, v) * img(r + u - cr, c + v - cc)`
/// with `(cr, cc)` the kernel centre. The kernel is *not* flipped.
pub fn convolve2d(img: &GrayImage, kernel: &Kernel2D, border: Border) -> Result<GrayImage> {
    let (h, w) = img.dims();
    let (kr, kc) = (kernel.rows(), kernel.cols());
    let (cr, cc) = ((kr / 2) as isize, (kc / 2) as isize);
    let src = img.data();

    match border {
        Border::Valid => {
            if kr > h || kc > w {
                return Err(Error::dim(format!(
                    "{kr}x{kc} kernel does not fit a {h}x{w} image in valid mode"
                )));
            }
            let (oh, ow) = (h - kr + 1, w - kc + 1);
            let mut out = vec![0.0; oh * ow];
            for r in 0..oh {
                for c in 0..ow {
                    let mut acc = 0.0;
                    for u in 0..kr {
                        let row = &src[(r + u) * w + c..(r + u) * w + c + kc];
                        for (v, &x) in row.iter().enumerate() {
                            acc += kernel.at(u, v) * x;
                        }
                    }
                    out[r * ow + c] = acc;
                }
            }
            Ok(GrayImage::from_raw(oh, ow, out))
        }
        Border::Zero | Border::Replicate => {
            let mut out = vec![0.0; h * w];
            for r in 0..h {
                for c in 0..w {
                    let mut acc = 0.0;
                    for u in 0..kr {
                        let rr = r as isize + u as isize - cr;
                        let rr = if (0..h as isize).contains(&rr) {
                            rr as usize
                        } else if border == Border::Zero {
                            continue;
                        } else {
                            clamp_index(rr, h)
                        };
                        for v in 0..kc {
                            let cc2 = c as isize + v as isize - cc;
                            let cc2 = if (0..w as isize).contains(&cc2) {
                                cc2 as usize
                            } else if border == Border::Zero {
                                continue;
                            } else {
                                clamp_index(cc2, w)
                            };
                            acc += kernel.at(u, v) * src[rr * w + cc2];
                        }
                    }
                    out[r * w + c] = acc;
                }
            }
            Ok(GrayImage::from_raw(h, w, out))
        }
    }
}
