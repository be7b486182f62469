use crate::geometry::Point2;
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Connectivity {
    Four,
    Eight,
}

/// Integer pixel bounding box; covers columns `x..x + w` and rows `y..y + h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Class value shared by every member pixel.
    pub class: u8,
    pub count: usize,
    /// Mean of the member pixel coordinates.
    pub centroid: Point2,
    pub bbox: PixelBox,
}

/// Components of a labelled raster plus the per-pixel component index
/// (`0` for background, `k + 1` for `components[k]`).
pub(crate) struct Labelling {
    pub components: Vec<Component>,
    pub labels: Vec<u32>,
}

/// Connected components of equal nonzero `classes` values, in raster order
/// of each component's first pixel.
pub(crate) fn label_classes(
    width: u32,
    height: u32,
    classes: &[u8],
    connectivity: Connectivity,
) -> Labelling {
    let (w, h) = (width as usize, height as usize);
    debug_assert_eq!(classes.len(), w * h);
    let mut labels = vec![0u32; w * h];
    let mut components = Vec::new();
    let mut stack = Vec::new();

    for start in 0..w * h {
        let class = classes[start];
        if class == 0 || labels[start] != 0 {
            continue;
        }
        let id = components.len() as u32 + 1;
        labels[start] = id;
        stack.push(start);
        let (mut count, mut sx, mut sy) = (0usize, 0u64, 0u64);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0usize, 0usize);

        while let Some(i) = stack.pop() {
            let (x, y) = (i % w, i / w);
            count += 1;
            sx += x as u64;
            sy += y as u64;
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);

            let mut visit = |j: usize| {
                if classes[j] == class && labels[j] == 0 {
                    labels[j] = id;
                    stack.push(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
            if connectivity == Connectivity::Eight {
                if x > 0 && y > 0 {
                    visit(i - w - 1);
                }
                if x + 1 < w && y > 0 {
                    visit(i - w + 1);
                }
                if x > 0 && y + 1 < h {
                    visit(i + w - 1);
                }
                if x + 1 < w && y + 1 < h {
                    visit(i + w + 1);
                }
            }
        }

        components.push(Component {
            class,
            count,
            centroid: Point2::new(sx as f64 / count as f64, sy as f64 / count as f64),
            bbox: PixelBox {
                x: x0 as u32,
                y: y0 as u32,
                w: (x1 - x0 + 1) as u32,
                h: (y1 - y0 + 1) as u32,
            },
        });
    }
    Labelling { components, labels }
}

/// Connected components of the nonzero pixels of a single-channel mask.
pub fn connected_components(mask: &Image, connectivity: Connectivity) -> Vec<Component> {
    assert_eq!(mask.channels(), 1, "connected_components expects a single-channel mask");
    let binary: Vec<u8> = mask.data().iter().map(|&v| u8::from(v != 0)).collect();
    label_classes(mask.width(), mask.height(), &binary, connectivity).components
}
