use dephasometry::superconductor::*;
use std::time::Instant;
fn main() {
    let args: Vec<String> = std::env::args().collect();
    let kind: GapKind = args[1].parse().unwrap();
    let q: f64 = args[2].parse().unwrap();
    let th: f64 = args[3].parse().unwrap();
    let mut p = ScParams::fese(kind);
    if args.len() > 5 {
        p.grid.radial = args[4].parse().unwrap();
        p.grid.angular = args[5].parse().unwrap();
    }
    if args.len() > 6 {
        p.grid.angular_tol = args[6].parse().unwrap();
    }
    let t = Instant::now();
    let v = transverse_conductivity(&p, q, th, 1e-7).unwrap();
    println!("{kind:?} q={q} th={th} sigma={v:.8} time={:?}", t.elapsed());
}
