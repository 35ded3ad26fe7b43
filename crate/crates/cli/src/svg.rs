//! Minimal SVG 1.1 writer for planar scenes.

use std::fmt::Write;

use thiserror::Error;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SvgError {
    #[error("scene has nothing to draw")]
    EmptyScene,
    #[error("scene has a non-finite coordinate")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Polyline {
        points: Vec<Point>,
        closed: bool,
        stroke: String,
    },
    Circle {
        center: Point,
        radius: f64,
        stroke: String,
    },
    Dots {
        points: Vec<Point>,
        fill: String,
    },
}

/// Shapes in drawing order. The `y` axis points up.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub title: Option<String>,
    pub shapes: Vec<Shape>,
}

impl Scene {
    pub fn new(title: impl Into<String>) -> Self {
        Self {
            title: Some(title.into()),
            shapes: Vec::new(),
        }
    }

    pub fn polyline(&mut self, points: Vec<Point>, closed: bool, stroke: &str) {
        self.shapes.push(Shape::Polyline {
            points,
            closed,
            stroke: stroke.into(),
        });
    }

    pub fn circle(&mut self, center: Point, radius: f64, stroke: &str) {
        self.shapes.push(Shape::Circle {
            center,
            radius,
            stroke: stroke.into(),
        });
    }

    pub fn dots(&mut self, points: Vec<Point>, fill: &str) {
        self.shapes.push(Shape::Dots {
            points,
            fill: fill.into(),
        });
    }

    /// `(xmin, ymin, xmax, ymax)` over every shape.
    pub fn bounds(&self) -> Result<[f64; 4], SvgError> {
        let mut b = [
            f64::INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::NEG_INFINITY,
        ];
        let mut finite = true;
        let mut grow = |p: Point| {
            finite &= p[0].is_finite() && p[1].is_finite();
            b[0] = b[0].min(p[0]);
            b[1] = b[1].min(p[1]);
            b[2] = b[2].max(p[0]);
            b[3] = b[3].max(p[1]);
        };
        for s in &self.shapes {
            match s {
                Shape::Polyline { points, .. } | Shape::Dots { points, .. } => {
                    points.iter().for_each(|&p| grow(p))
                }
                Shape::Circle {
                    center: c,
                    radius: r,
                    ..
                } => {
                    grow([c[0] - r, c[1] - r]);
                    grow([c[0] + r, c[1] + r]);
                }
            }
        }
        if !finite {
            return Err(SvgError::NonFinite);
        }
        if b[0] > b[2] {
            return Err(SvgError::EmptyScene);
        }
        Ok(b)
    }
}

fn num(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

/// Renders `scene` with a viewBox that leaves a 5% margin on every side.
pub fn render_svg(scene: &Scene) -> Result<String, SvgError> {
    let [x0, y0, x1, y1] = scene.bounds()?;
    let span = (x1 - x0).max(y1 - y0);
    let span = if span > 0.0 { span } else { 1.0 };
    let (w, h) = ((x1 - x0).max(1e-3 * span), (y1 - y0).max(1e-3 * span));
    let (mx, my) = (0.05 * w, 0.05 * h);
    let (vx, vy, vw, vh) = (x0 - mx, -y1 - my, w + 2.0 * mx, h + 2.0 * my);
    let stroke_w = num(2e-3 * span);
    let dots: usize = scene
        .shapes
        .iter()
        .map(|s| {
            if let Shape::Dots { points, .. } = s {
                points.len()
            } else {
                0
            }
        })
        .sum();
    let dot_r = num(if dots > 1000 { 1.2e-3 } else { 4e-3 } * span);
    let mut o = String::new();
    o.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(
        o,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"800\" height=\"{}\" viewBox=\"{} {} {} {}\">",
        (800.0 * vh / vw).round().max(1.0),
        num(vx),
        num(vy),
        num(vw),
        num(vh)
    );
    if let Some(t) = &scene.title {
        let _ = writeln!(o, "<title>{}</title>", escape(t));
    }
    let pts = |ps: &[Point]| {
        ps.iter()
            .map(|p| format!("{},{}", num(p[0]), num(-p[1])))
            .collect::<Vec<_>>()
            .join(" ")
    };
    for s in &scene.shapes {
        match s {
            Shape::Polyline {
                points,
                closed,
                stroke,
            } => {
                if points.is_empty() {
                    continue;
                }
                let tag = if *closed { "polygon" } else { "polyline" };
                let _ = writeln!(
                    o,
                    "<{tag} points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{stroke_w}\"/>",
                    pts(points),
                    escape(stroke)
                );
            }
            Shape::Circle {
                center,
                radius,
                stroke,
            } => {
                let _ = writeln!(
                    o,
                    "<circle cx=\"{}\" cy=\"{}\" r=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"{stroke_w}\"/>",
                    num(center[0]),
                    num(-center[1]),
                    num(*radius),
                    escape(stroke)
                );
            }
            Shape::Dots { points, fill } => {
                if points.is_empty() {
                    continue;
                }
                let _ = writeln!(o, "<g fill=\"{}\">", escape(fill));
                for p in points {
                    let _ = writeln!(
                        o,
                        "<circle cx=\"{}\" cy=\"{}\" r=\"{dot_r}\"/>",
                        num(p[0]),
                        num(-p[1])
                    );
                }
                o.push_str("</g>\n");
            }
        }
    }
    o.push_str("</svg>\n");
    Ok(o)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}
