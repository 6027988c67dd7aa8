//! Zhang–Suen thinning with a 2×2-block cleanup pass.

use crate::raster::BinaryImage;

/// Neighbours P2..P9, clockwise from north.
const RING: [(i64, i64); 8] = [(0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1), (-1, 0), (-1, -1)];

fn ring(img: &BinaryImage, x: usize, y: usize) -> [bool; 8] {
    let mut n = [false; 8];
    for (k, (dx, dy)) in RING.iter().enumerate() {
        n[k] = img.get_signed(x as i64 + dx, y as i64 + dy);
    }
    n
}

fn transitions(n: &[bool; 8]) -> usize {
    (0..8).filter(|&k| !n[k] && n[(k + 1) % 8]).count()
}

fn zs_deletable(n: &[bool; 8], first: bool) -> bool {
    let b = n.iter().filter(|&&v| v).count();
    if !(2..=6).contains(&b) || transitions(n) != 1 {
        return false;
    }
    let [p2, _, p4, _, p6, _, p8, _] = *n;
    if first {
        !(p2 && p4 && p6) && !(p4 && p6 && p8)
    } else {
        !(p2 && p4 && p8) && !(p2 && p6 && p8)
    }
}

/// Removing the pixel leaves its 8-neighbourhood as one foreground
/// 8-component and one background 4-component touching the centre.
fn is_simple(n: &[bool; 8]) -> bool {
    let fg = n.iter().filter(|&&v| v).count();
    if fg == 0 || fg == 8 {
        return false;
    }
    // Foreground 8-components around the ring: edge neighbours (even k) link
    // to both diagonal neighbours.
    let mut seen = [false; 8];
    let mut fg_components = 0;
    for start in 0..8 {
        if !n[start] || seen[start] {
            continue;
        }
        fg_components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            let mut links = vec![(k + 1) % 8, (k + 7) % 8];
            if k % 2 == 0 {
                links.extend([(k + 2) % 8, (k + 6) % 8]);
            }
            for j in links {
                if n[j] && !seen[j] {
                    seen[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    // Background 4-components among edge neighbours, joined through a
    // background corner.
    let mut bg_components = 0;
    let mut seen = [false; 8];
    for start in [0usize, 2, 4, 6] {
        if n[start] || seen[start] {
            continue;
        }
        bg_components += 1;
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(k) = stack.pop() {
            for (corner, next) in [((k + 1) % 8, (k + 2) % 8), ((k + 7) % 8, (k + 6) % 8)] {
                if !n[corner] && !n[next] && !seen[next] {
                    seen[next] = true;
                    stack.push(next);
                }
            }
        }
    }
    fg_components == 1 && bg_components == 1
}

fn zs_pass(img: &mut BinaryImage, first: bool) -> bool {
    let candidates: Vec<(usize, usize)> =
        img.pixels().into_iter().filter(|&(x, y)| zs_deletable(&ring(img, x, y), first)).collect();
    let mut changed = false;
    for (x, y) in candidates {
        let n = ring(img, x, y);
        if zs_deletable(&n, first) && is_simple(&n) {
            img.set(x, y, false);
            changed = true;
        }
    }
    changed
}

fn block_cleanup(img: &mut BinaryImage) -> bool {
    let mut changed = false;
    for y in 0..img.height.saturating_sub(1) {
        for x in 0..img.width.saturating_sub(1) {
            let block = [(x, y), (x + 1, y), (x, y + 1), (x + 1, y + 1)];
            if !block.iter().all(|&(bx, by)| img.get(bx, by)) {
                continue;
            }
            for (bx, by) in block {
                let n = ring(img, bx, by);
                if n.iter().filter(|&&v| v).count() >= 2 && is_simple(&n) {
                    img.set(bx, by, false);
                    changed = true;
                    break;
                }
            }
        }
    }
    changed
}

pub fn thin(input: &BinaryImage) -> BinaryImage {
    let mut img = input.clone();
    loop {
        while zs_pass(&mut img, true) | zs_pass(&mut img, false) {}
        if !block_cleanup(&mut img) {
            return img;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn from_rows(rows: &[&str]) -> BinaryImage {
        let mut img = BinaryImage::new(rows[0].len(), rows.len());
        for (y, r) in rows.iter().enumerate() {
            for (x, c) in r.chars().enumerate() {
                img.set(x, y, c == '#');
            }
        }
        img
    }

    fn show(img: &BinaryImage) -> String {
        (0..img.height)
            .map(|y| (0..img.width).map(|x| if img.get(x, y) { '#' } else { '.' }).collect::<String>())
            .collect::<Vec<_>>()
            .join("\n")
    }

    #[test]
    fn simple_point_cases() {
        // Isolated pixel, interior pixel, bridge and corner.
        assert!(!is_simple(&[false; 8]));
        assert!(!is_simple(&[true; 8]));
        assert!(!is_simple(&[true, false, false, false, true, false, false, false]));
        assert!(is_simple(&[true, false, true, false, false, false, false, false]));
        assert!(is_simple(&[true, true, true, false, false, false, false, false]));
        // North and south-east diagonal: two separate arms.
        assert!(!is_simple(&[true, false, false, true, false, false, false, false]));
    }

    #[test]
    fn diagonal_two_thick_stays_connected() {
        let img = from_rows(&["##....", ".##...", "..##..", "...##.", "....##"]);
        let out = thin(&img);
        assert_eq!(out.component_count(), 1);
        assert!(out.count() >= 2, "\n{}", show(&out));
    }

    #[test]
    fn solid_square_shrinks_to_few_pixels() {
        let img = from_rows(&["#####", "#####", "#####", "#####", "#####"]);
        let out = thin(&img);
        assert_eq!(out.component_count(), 1);
        assert!(out.count() <= 5, "\n{}", show(&out));
    }
}
