//! Exact volume of the convex hull of lattice points.
//!
//! Points are inserted one at a time into a placing triangulation. Every
//! boundary facet is a simplex with an integer normal, so visibility tests
//! are exact and coplanar points need no perturbation: a point outside the
//! hull always sees some facet strictly, and the new simplices are cones
//! over exactly those facets.

use std::collections::HashMap;

use super::BkkError;

/// Determinant by fraction-free (Bareiss) elimination. Exact for integer
/// input as long as intermediates fit in `i128`.
pub(crate) fn det_bareiss(mut a: Vec<Vec<i128>>) -> Result<i128, BkkError> {
    let n = a.len();
    if n == 0 {
        return Ok(1);
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            let Some(swap) = (k + 1..n).find(|&i| a[i][k] != 0) else {
                return Ok(0);
            };
            a.swap(k, swap);
            sign = -sign;
        }
        for i in k + 1..n {
            for j in k + 1..n {
                let v = a[i][j]
                    .checked_mul(a[k][k])
                    .and_then(|x| x.checked_sub(a[i][k].checked_mul(a[k][j])?))
                    .ok_or(BkkError::Overflow)?;
                a[i][j] = v / prev;
            }
            a[i][k] = 0;
        }
        prev = a[k][k];
    }
    Ok(sign * a[n - 1][n - 1])
}

fn rank(rows: &[Vec<i128>]) -> Result<usize, BkkError> {
    if rows.is_empty() {
        return Ok(0);
    }
    let mut a = rows.to_vec();
    let (n, m) = (a.len(), a[0].len());
    let mut r = 0;
    let mut prev = 1i128;
    for c in 0..m {
        let Some(p) = (r..n).find(|&i| a[i][c] != 0) else {
            continue;
        };
        a.swap(r, p);
        for i in r + 1..n {
            for j in c + 1..m {
                let v = a[i][j]
                    .checked_mul(a[r][c])
                    .and_then(|x| x.checked_sub(a[i][c].checked_mul(a[r][j])?))
                    .ok_or(BkkError::Overflow)?;
                a[i][j] = v / prev;
            }
            a[i][c] = 0;
        }
        prev = a[r][c];
        r += 1;
        if r == n {
            break;
        }
    }
    Ok(r)
}

struct Facet {
    verts: Vec<usize>,
    normal: Vec<i128>,
    offset: i128,
}

fn dot(a: &[i128], b: &[i128]) -> i128 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Outward integer normal of the hyperplane through `verts`, oriented away
/// from `inside_scaled / scale`.
fn facet(points: &[Vec<i128>], verts: Vec<usize>, inside_scaled: &[i128], scale: i128) -> Result<Facet, BkkError> {
    let d = inside_scaled.len();
    let base = &points[verts[0]];
    let rows: Vec<Vec<i128>> = verts[1..]
        .iter()
        .map(|&v| points[v].iter().zip(base).map(|(a, b)| a - b).collect())
        .collect();
    let mut normal = Vec::with_capacity(d);
    for j in 0..d {
        let minor: Vec<Vec<i128>> = rows
            .iter()
            .map(|r| r.iter().enumerate().filter(|(c, _)| *c != j).map(|(_, x)| *x).collect())
            .collect();
        let c = det_bareiss(minor)?;
        normal.push(if j % 2 == 0 { c } else { -c });
    }
    let mut offset = dot(&normal, base);
    if dot(&normal, inside_scaled) > offset * scale {
        normal.iter_mut().for_each(|x| *x = -*x);
        offset = -offset;
    }
    Ok(Facet { verts, normal, offset })
}

/// Result of a hull computation.
pub struct Hull {
    /// `d!` times the Euclidean volume; an integer for lattice points.
    pub normalized_volume: i128,
    /// Indices (into the deduplicated input) of points on the boundary.
    pub boundary: Vec<Vec<i64>>,
}

/// Hull of `points` in dimension `dim`. Lower-dimensional point sets have
/// zero volume and keep every point as boundary.
pub fn hull(points: &[Vec<i64>], dim: usize) -> Result<Hull, BkkError> {
    let mut uniq: Vec<Vec<i64>> = points.to_vec();
    uniq.sort();
    uniq.dedup();
    if uniq.iter().any(|p| p.len() != dim) {
        return Err(BkkError::Dimension { expected: dim });
    }
    let pts: Vec<Vec<i128>> = uniq.iter().map(|p| p.iter().map(|&x| x as i128).collect()).collect();

    // Greedy affinely independent starting simplex.
    let mut simplex = vec![0usize];
    let mut diffs: Vec<Vec<i128>> = Vec::new();
    for i in 1..pts.len() {
        if simplex.len() == dim + 1 {
            break;
        }
        let d: Vec<i128> = pts[i].iter().zip(&pts[0]).map(|(a, b)| a - b).collect();
        diffs.push(d);
        if rank(&diffs)? == diffs.len() {
            simplex.push(i);
        } else {
            diffs.pop();
        }
    }
    if simplex.len() < dim + 1 || dim == 0 {
        return Ok(Hull {
            normalized_volume: 0,
            boundary: uniq,
        });
    }

    let scale = (dim + 1) as i128;
    let inside: Vec<i128> = (0..dim).map(|j| simplex.iter().map(|&v| pts[v][j]).sum()).collect();
    let mut facets: Vec<Facet> = Vec::new();
    for skip in 0..=dim {
        let verts: Vec<usize> = simplex.iter().enumerate().filter(|(k, _)| *k != skip).map(|(_, v)| *v).collect();
        facets.push(facet(&pts, verts, &inside, scale)?);
    }
    let apex = simplex[0];
    let mut volume = {
        let rows = simplex[1..]
            .iter()
            .map(|&v| pts[v].iter().zip(&pts[apex]).map(|(a, b)| a - b).collect())
            .collect();
        det_bareiss(rows)?.abs()
    };

    // Far points first keeps the intermediate hulls large and the facet
    // count small.
    let mut order: Vec<usize> = (0..pts.len()).filter(|i| !simplex.contains(i)).collect();
    let spread = |i: usize| -> i128 { pts[i].iter().zip(&inside).map(|(x, c)| (x * scale - c).pow(2)).sum() };
    order.sort_by_key(|&i| std::cmp::Reverse(spread(i)));

    for p in order {
        let point = &pts[p];
        let mut visible = Vec::new();
        for (k, f) in facets.iter().enumerate() {
            let h = dot(&f.normal, point) - f.offset;
            if h > 0 {
                visible.push(k);
                volume = volume.checked_add(h).ok_or(BkkError::Overflow)?;
            }
        }
        if visible.is_empty() {
            continue;
        }
        let mut ridges: HashMap<Vec<usize>, usize> = HashMap::new();
        for &k in &visible {
            let verts = &facets[k].verts;
            for skip in 0..verts.len() {
                let ridge: Vec<usize> = verts.iter().enumerate().filter(|(j, _)| *j != skip).map(|(_, v)| *v).collect();
                *ridges.entry(ridge).or_insert(0) += 1;
            }
        }
        let mut keep = vec![true; facets.len()];
        for &k in &visible {
            keep[k] = false;
        }
        let mut next: Vec<Facet> = facets.into_iter().zip(keep).filter(|(_, k)| *k).map(|(f, _)| f).collect();
        for (mut ridge, count) in ridges {
            if count == 1 {
                ridge.push(p);
                ridge.sort_unstable();
                next.push(facet(&pts, ridge, &inside, scale)?);
            }
        }
        facets = next;
    }

    let mut on_boundary = vec![false; pts.len()];
    for f in &facets {
        for &v in &f.verts {
            on_boundary[v] = true;
        }
    }
    Ok(Hull {
        normalized_volume: volume,
        boundary: uniq.into_iter().zip(on_boundary).filter(|(_, b)| *b).map(|(p, _)| p).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_cube_volume() {
        let mut pts = Vec::new();
        for i in 0..8i64 {
            pts.push(vec![i & 1, (i >> 1) & 1, (i >> 2) & 1]);
        }
        // Interior and face points must not change anything.
        pts.push(vec![0, 0, 0]);
        let h = hull(&pts, 3).unwrap();
        assert_eq!(h.normalized_volume, 6);
        assert_eq!(h.boundary.len(), 8);
    }

    #[test]
    fn degenerate_grid() {
        // 3x3x3 grid: many coplanar points on every face.
        let mut pts = Vec::new();
        for x in 0..3 {
            for y in 0..3 {
                for z in 0..3 {
                    pts.push(vec![x, y, z]);
                }
            }
        }
        assert_eq!(hull(&pts, 3).unwrap().normalized_volume, 8 * 6);
    }

    #[test]
    fn flat_set_has_zero_volume() {
        let pts = vec![vec![0, 0, 0], vec![1, 0, 0], vec![0, 1, 0], vec![1, 1, 0]];
        assert_eq!(hull(&pts, 3).unwrap().normalized_volume, 0);
    }

    #[test]
    fn bareiss_matches_cofactor_expansion() {
        let a = vec![vec![2, -1, 3], vec![0, 4, 1], vec![5, 2, -2]];
        // 2(-8-2) + 1(0-5) + 3(0-20) = -20 - 5 - 60
        assert_eq!(det_bareiss(a).unwrap(), -85);
    }
}
