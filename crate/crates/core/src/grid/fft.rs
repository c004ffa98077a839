use std::f64::consts::PI;

use num_complex::Complex64;

use super::{ComplexField, Field, Shape};
use crate::error::{Error, Result};

#[derive(Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// In-place iterative radix-2 transform of a power-of-two length buffer.
/// Unnormalized in both directions.
fn fft_in_place(buf: &mut [Complex64], dir: Direction) {
    let n = buf.len();
    debug_assert!(n.is_power_of_two());
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let sign = match dir {
        Direction::Forward => -1.0,
        Direction::Inverse => 1.0,
    };
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        // twiddles from direct cos/sin evaluation keep the error flat in n
        let twiddles: Vec<Complex64> = (0..half)
            .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / len as f64))
            .collect();
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let a = buf[start + k];
                let b = buf[start + k + half] * twiddles[k];
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn fft2_plane(plane: &mut [Complex64], height: usize, width: usize, dir: Direction) {
    for row in plane.chunks_exact_mut(width) {
        fft_in_place(row, dir);
    }
    let mut column = vec![Complex64::new(0.0, 0.0); height];
    for c in 0..width {
        for r in 0..height {
            column[r] = plane[r * width + c];
        }
        fft_in_place(&mut column, dir);
        for r in 0..height {
            plane[r * width + c] = column[r];
        }
    }
}

fn transform(input: &ComplexField, dir: Direction) -> Result<ComplexField> {
    let shape = input.shape();
    shape.ensure_pow2()?;
    let mut out = ComplexField::zeros(shape);
    let scale = match dir {
        Direction::Forward => 1.0,
        Direction::Inverse => 1.0 / shape.pixels() as f64,
    };
    for ch in 0..shape.channels {
        let mut plane = input.plane(ch);
        fft2_plane(&mut plane, shape.height, shape.width, dir);
        if scale != 1.0 {
            plane.iter_mut().for_each(|z| *z *= scale);
        }
        out.set_plane(ch, &plane);
    }
    Ok(out)
}

/// Forward 2-D DFT per channel, unnormalized.
pub fn dft2(f: &Field) -> Result<ComplexField> {
    transform(&ComplexField::from_real(f), Direction::Forward)
}

pub fn dft2_complex(f: &ComplexField) -> Result<ComplexField> {
    transform(f, Direction::Forward)
}

/// Inverse 2-D DFT per channel carrying the 1/(H·W) factor; returns the real part.
pub fn idft2(spectrum: &ComplexField) -> Result<Field> {
    Ok(transform(spectrum, Direction::Inverse)?.re())
}

pub fn idft2_complex(spectrum: &ComplexField) -> Result<ComplexField> {
    transform(spectrum, Direction::Inverse)
}

/// Places an odd-sized kernel on a `height × width` grid with its center at
/// index (0, 0), wrapping circularly.
pub fn embed_kernel(kernel: &Field, height: usize, width: usize) -> Result<Field> {
    let (kh, kw) = (kernel.height(), kernel.width());
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(Error::shape(format!("kernel {kh}x{kw} must have odd side lengths")));
    }
    if kh > height || kw > width {
        return Err(Error::shape(format!(
            "kernel {kh}x{kw} is larger than the {height}x{width} grid"
        )));
    }
    let shape = Shape { height, width, channels: kernel.channels() };
    let mut out = Field::zeros(shape);
    let (ch_, cw) = (kh / 2, kw / 2);
    for r in 0..kh {
        for c in 0..kw {
            let rr = (r + height - ch_) % height;
            let cc = (c + width - cw) % width;
            for ch in 0..kernel.channels() {
                out.set(rr, cc, ch, kernel.get(r, c, ch));
            }
        }
    }
    Ok(out)
}

/// DFT of the embedded kernel, broadcast to `shape.channels` when the kernel
/// has a single channel.
pub fn kernel_transfer(kernel: &Field, shape: Shape) -> Result<ComplexField> {
    if kernel.channels() != 1 && kernel.channels() != shape.channels {
        return Err(Error::shape(format!(
            "kernel has {} channels, field has {}",
            kernel.channels(),
            shape.channels
        )));
    }
    shape.ensure_pow2()?;
    let embedded = embed_kernel(kernel, shape.height, shape.width)?;
    let spectrum = dft2(&embedded)?;
    if kernel.channels() == shape.channels {
        return Ok(spectrum);
    }
    let mut out = ComplexField::zeros(shape);
    let plane = spectrum.plane(0);
    for ch in 0..shape.channels {
        out.set_plane(ch, &plane);
    }
    Ok(out)
}

/// Circular convolution `f ⊛ kernel` evaluated as a pointwise Fourier product.
pub fn circular_convolve(f: &Field, kernel: &Field) -> Result<Field> {
    let transfer = kernel_transfer(kernel, f.shape())?;
    let mut spectrum = dft2(f)?;
    for (z, h) in spectrum.data_mut().iter_mut().zip(transfer.data()) {
        *z *= h;
    }
    idft2(&spectrum)
}
