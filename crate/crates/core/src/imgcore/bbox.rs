use serde::{Deserialize, Serialize};

/// Axis-aligned integer pixel rectangle. The right and bottom edges are
/// exclusive, so a box covers columns `x..x + w` and rows `y..y + h`.
///
/// Serialized as `[x, y, w, h]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl From<[u32; 4]> for BBox {
    fn from([x, y, w, h]: [u32; 4]) -> Self {
        BBox { x, y, w, h }
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        [b.x, b.y, b.w, b.h]
    }
}

impl BBox {
    pub const fn new(x: u32, y: u32, w: u32, h: u32) -> Self {
        BBox { x, y, w, h }
    }

    /// Box covering a whole `width`×`height` image.
    pub const fn full(width: u32, height: u32) -> Self {
        BBox::new(0, 0, width, height)
    }

    #[inline]
    pub fn right(&self) -> u32 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> u32 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> u64 {
        self.w as u64 * self.h as u64
    }

    pub fn is_empty(&self) -> bool {
        self.w == 0 || self.h == 0
    }

    /// Center in continuous pixel coordinates.
    pub fn center(&self) -> (f64, f64) {
        (
            self.x as f64 + self.w as f64 / 2.0,
            self.y as f64 + self.h as f64 / 2.0,
        )
    }

    /// True when the box lies fully inside a `width`×`height` image.
    pub fn is_inside(&self, width: u32, height: u32) -> bool {
        !self.is_empty() && self.right() <= width && self.bottom() <= height
    }

    /// True when `other` is fully covered by `self`.
    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }

    /// Intersection, or `None` when the overlap has zero area (disjoint or
    /// touching only along an edge or corner).
    pub fn intersect(&self, other: &BBox) -> Option<BBox> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        (x1 > x0 && y1 > y0).then(|| BBox::new(x0, y0, x1 - x0, y1 - y0))
    }

    /// Intersection over union, 0 for disjoint boxes.
    pub fn iou(&self, other: &BBox) -> f64 {
        let inter = match self.intersect(other) {
            Some(b) => b.area(),
            None => return 0.0,
        };
        let union = self.area() + other.area() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    /// Clip a box given by continuous edges `[x0, x1) × [y0, y1)` to the
    /// image. Fractional edges are truncated toward the interior.
    pub fn from_edges_clipped(
        x0: f64,
        y0: f64,
        x1: f64,
        y1: f64,
        width: u32,
        height: u32,
    ) -> Option<BBox> {
        const EPS: f64 = 1e-9;
        let left = (x0 - EPS).ceil().max(0.0);
        let top = (y0 - EPS).ceil().max(0.0);
        let right = (x1 + EPS).floor().min(width as f64);
        let bottom = (y1 + EPS).floor().min(height as f64);
        (right > left && bottom > top).then(|| {
            BBox::new(
                left as u32,
                top as u32,
                (right - left) as u32,
                (bottom - top) as u32,
            )
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn intersect_examples() {
        let a = BBox::new(10, 10, 20, 20);
        assert_eq!(a.intersect(&a), Some(a));
        assert_eq!(
            BBox::new(0, 0, 5, 5).intersect(&BBox::new(10, 10, 5, 5)),
            None
        );
        assert_eq!(
            BBox::new(0, 0, 20, 20).intersect(&BBox::new(10, 10, 20, 20)),
            Some(BBox::new(10, 10, 10, 10))
        );
        // shared edge only
        assert_eq!(
            BBox::new(0, 0, 5, 5).intersect(&BBox::new(5, 0, 5, 5)),
            None
        );
    }

    #[test]
    fn iou_examples() {
        let a = BBox::new(3, 4, 10, 7);
        assert_eq!(a.iou(&a), 1.0);
        assert_eq!(a.iou(&BBox::new(50, 50, 2, 2)), 0.0);
        let v = BBox::new(0, 0, 2, 2).iou(&BBox::new(1, 1, 2, 2));
        assert!((v - 1.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn serde_as_array() {
        let b = BBox::new(1, 2, 3, 4);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1,2,3,4]");
        let back: BBox = serde_json::from_str("[1,2,3,4]").unwrap();
        assert_eq!(back, b);
    }

    fn arb_box() -> impl Strategy<Value = BBox> {
        (0u32..50, 0u32..50, 1u32..40, 1u32..40).prop_map(|(x, y, w, h)| BBox::new(x, y, w, h))
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
            let ab = a.iou(&b);
            prop_assert_eq!(ab, b.iou(&a));
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(a.iou(&a), 1.0);
        }

        #[test]
        fn intersection_is_inside_both(a in arb_box(), b in arb_box()) {
            if let Some(i) = a.intersect(&b) {
                prop_assert!(a.contains(&i));
                prop_assert!(b.contains(&i));
            }
        }
    }
}
