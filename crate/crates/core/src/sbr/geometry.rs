//! Axis-aligned planar walls and the icosahedral direction tessellation.

use nalgebra::Vector3;

pub type V3 = Vector3<f64>;

/// Slack when deciding whether a point lies on a wall rectangle.
pub const ON_WALL_TOL: f64 = 1e-9;

/// Axis-aligned rectangle `p[axis] = offset`, spanning `lo..hi` along the
/// other two axes taken in the order `(axis+1)%3, (axis+2)%3`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub axis: usize,
    pub offset: f64,
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Rect {
    /// Rectangle on `p[axis] = offset` with extents given per global axis
    /// (the entry for `axis` itself is ignored).
    pub fn new(axis: usize, offset: f64, ranges: [[f64; 2]; 3]) -> Self {
        let [a, b] = [(axis + 1) % 3, (axis + 2) % 3];
        let (ra, rb) = (ranges[a], ranges[b]);
        Rect {
            axis,
            offset,
            lo: [ra[0].min(ra[1]), rb[0].min(rb[1])],
            hi: [ra[0].max(ra[1]), rb[0].max(rb[1])],
        }
    }

    fn others(&self) -> [usize; 2] {
        [(self.axis + 1) % 3, (self.axis + 2) % 3]
    }

    pub fn normal(&self) -> V3 {
        let mut n = V3::zeros();
        n[self.axis] = 1.0;
        n
    }

    pub fn signed_distance(&self, p: &V3) -> f64 {
        p[self.axis] - self.offset
    }

    pub fn contains(&self, p: &V3, tol: f64) -> bool {
        let [a, b] = self.others();
        p[a] >= self.lo[0] - tol
            && p[a] <= self.hi[0] + tol
            && p[b] >= self.lo[1] - tol
            && p[b] <= self.hi[1] + tol
            && (p[self.axis] - self.offset).abs() <= tol
    }

    /// Ray parameter of the plane crossing, if the ray is not parallel.
    pub fn plane_hit(&self, origin: &V3, dir: &V3) -> Option<f64> {
        let d = dir[self.axis];
        if d.abs() < 1e-15 {
            None
        } else {
            Some((self.offset - origin[self.axis]) / d)
        }
    }

    /// Ray parameter at which the ray crosses the rectangle.
    pub fn hit(&self, origin: &V3, dir: &V3) -> Option<f64> {
        let t = self.plane_hit(origin, dir)?;
        let mut p = origin + dir * t;
        p[self.axis] = self.offset;
        self.contains(&p, ON_WALL_TOL).then_some(t)
    }

    pub fn mirror_point(&self, p: &V3) -> V3 {
        let mut q = *p;
        q[self.axis] = 2.0 * self.offset - p[self.axis];
        q
    }

    pub fn mirror_dir(&self, d: &V3) -> V3 {
        let mut q = *d;
        q[self.axis] = -d[self.axis];
        q
    }

    pub fn area(&self) -> f64 {
        (self.hi[0] - self.lo[0]) * (self.hi[1] - self.lo[1])
    }
}

/// Solid angle of the spherical triangle with unit vertices `a, b, c`.
pub fn solid_angle(a: &V3, b: &V3, c: &V3) -> f64 {
    let num = a.dot(&b.cross(c)).abs();
    let den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
    2.0 * num.atan2(den)
}

/// Unit-sphere triangles from an icosahedron subdivided `level` times
/// (`20·4^level` faces, counter-clockwise seen from outside).
pub fn icosphere(level: u32) -> Vec<[V3; 3]> {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let v: Vec<V3> = [
        (-1.0, g, 0.0),
        (1.0, g, 0.0),
        (-1.0, -g, 0.0),
        (1.0, -g, 0.0),
        (0.0, -1.0, g),
        (0.0, 1.0, g),
        (0.0, -1.0, -g),
        (0.0, 1.0, -g),
        (g, 0.0, -1.0),
        (g, 0.0, 1.0),
        (-g, 0.0, -1.0),
        (-g, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| V3::new(x, y, z).normalize())
    .collect();
    const FACES: [[usize; 3]; 20] = [
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let mut faces: Vec<[V3; 3]> = FACES.iter().map(|f| [v[f[0]], v[f[1]], v[f[2]]]).collect();
    for _ in 0..level {
        faces = faces
            .iter()
            .flat_map(|[a, b, c]| {
                let ab = (a + b).normalize();
                let bc = (b + c).normalize();
                let ca = (c + a).normalize();
                [[*a, ab, ca], [ab, *b, bc], [ca, bc, *c], [ab, bc, ca]]
            })
            .collect();
    }
    faces
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;

    #[test]
    fn tessellation_partitions_the_sphere() {
        for level in 0..5 {
            let faces = icosphere(level);
            assert_eq!(faces.len(), 20 * 4usize.pow(level));
            let total: f64 = faces.iter().map(|[a, b, c]| solid_angle(a, b, c)).sum();
            assert!((total - 4.0 * PI).abs() < 1e-9, "level {level}: {total}");
            for [a, b, c] in &faces {
                assert!(a.cross(b).dot(c) > 0.0, "face not counter-clockwise");
            }
        }
    }

    #[test]
    fn rect_hit_and_mirror() {
        let r = Rect { axis: 0, offset: 2.0, lo: [0.0, 0.0], hi: [4.0, 3.0] };
        let o = V3::new(0.0, 1.0, 1.0);
        let t = r.hit(&o, &V3::new(1.0, 0.5, 0.0)).unwrap();
        assert!((t - 2.0).abs() < 1e-15);
        assert!(r.hit(&o, &V3::new(1.0, 0.0, 2.0)).is_none());
        assert_eq!(r.mirror_point(&o), V3::new(4.0, 1.0, 1.0));
    }
}
