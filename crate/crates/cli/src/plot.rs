//! Overhead SVG of executed paths. Walls are solid black lines, discs are
//! filled grey, each robot gets its own color with a start dot and a goal
//! cross.

use std::fmt::Write as _;

use mrtp::Vec2;

use crate::scenario::Scenario;

const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
];
const PX_PER_M: f64 = 40.0;

pub fn render_svg(scenario: &Scenario, paths: &[Vec<Vec2>]) -> String {
    let b = &scenario.world.bounds;
    let (w, h) = ((b.max.x - b.min.x) * PX_PER_M, (b.max.y - b.min.y) * PX_PER_M);
    // world y points up, SVG y points down
    let px = |p: &Vec2| ((p.x - b.min.x) * PX_PER_M, (b.max.y - p.y) * PX_PER_M);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="white" stroke="#999"/>"##);
    for wall in &scenario.world.walls {
        let (x1, y1) = px(&wall.a);
        let (x2, y2) = px(&wall.b);
        let _ = writeln!(
            out,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="black" stroke-width="3"/>"#
        );
    }
    for disc in &scenario.world.discs {
        let (cx, cy) = px(&disc.center);
        let _ = writeln!(
            out,
            r##"<circle cx="{cx:.2}" cy="{cy:.2}" r="{:.2}" fill="#bbb" stroke="black"/>"##,
            disc.radius * PX_PER_M
        );
    }
    for (i, (robot, path)) in scenario.robots.iter().zip(paths).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = path
            .iter()
            .map(|p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"><title>robot {}</title></polyline>"#,
            points.join(" "),
            robot.id
        );
        if let Some(start) = path.first() {
            let (x, y) = px(start);
            let _ = writeln!(out, r#"<circle cx="{x:.2}" cy="{y:.2}" r="4" fill="{color}"/>"#);
        }
        let (gx, gy) = px(&robot.goal());
        let _ = writeln!(
            out,
            r#"<path d="M{:.2},{:.2} l10,10 m0,-10 l-10,10" stroke="{color}" stroke-width="2"/>"#,
            gx - 5.0,
            gy - 5.0
        );
    }
    out.push_str("</svg>\n");
    out
}
