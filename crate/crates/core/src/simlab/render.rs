//! Flat-shaded rasterizer for the bench. Everything is drawn on the full
//! 640×480 front canvas; the other views are derived from it.

use std::sync::Arc;

use crate::chem::{ColorTag, Phase};
use crate::image::{RasterImage, Rgb, WHITE};
use crate::visualprompt::{View, Views};

use super::scene::{Container, ContainerKind as K, LabScene, CANVAS_H, CANVAS_W};

const OUTLINE: Rgb = [60, 60, 60];
const BUBBLE: Rgb = [150, 150, 150];
const FLAME: Rgb = [255, 140, 0];
const HEATER_ON: Rgb = [230, 30, 30];
const CRYSTAL_SPECK: Rgb = [170, 170, 180];

fn tool_color(kind: K) -> Rgb {
    match kind {
        K::GlassRod => [170, 200, 220],
        K::Spatula | K::PlatinumWire => ColorTag::Silver.rgb(),
        K::MetalWire => ColorTag::Gray.rgb(),
        K::Thermometer => [200, 40, 40],
        K::Rack => [139, 90, 43],
        K::AlcoholLamp => [200, 220, 240],
        _ => OUTLINE,
    }
}

/// Vertical layout of a vessel's contents: top of the solid band and top of
/// the liquid column, both in canvas rows.
struct Fill {
    floor: i64,
    solid_top: Option<i64>,
    liquid_top: Option<i64>,
}

fn fill_layout(c: &Container) -> Fill {
    let p = c.pose;
    let inner_h = (p.h - 2).max(0);
    let floor = p.y + p.h - 1;
    let mut level_base = floor;
    let mut solid_top = None;
    if c.has_solid() || c.flags.precipitate_color.is_some() {
        let band = (inner_h / 8).max(4);
        level_base = floor - band;
        solid_top = Some(level_base);
    }
    let liquid_top = c.has_liquid().then(|| {
        let ml: f64 = c
            .contents
            .iter()
            .filter(|s| s.phase != Phase::Solid && s.species.is_solvent())
            .map(|s| s.amount)
            .sum();
        let frac = (ml / c.capacity_ml).clamp(0.0, 1.0);
        let level = ((inner_h as f64) * frac).round().max(2.0) as i64;
        (level_base - level).max(p.y + 1)
    });
    Fill {
        floor,
        solid_top,
        liquid_top,
    }
}

/// Canvas row of the liquid surface, if the vessel holds any liquid.
pub fn liquid_surface_y(c: &Container) -> Option<i64> {
    fill_layout(c).liquid_top
}

fn draw_vessel(img: &mut RasterImage, c: &Container) {
    let p = c.pose;
    let (x0, y0, x1, y1) = (p.x, p.y, p.x + p.w, p.y + p.h);
    let fill = fill_layout(c);

    // solids settle at the bottom
    if let Some(top) = fill.solid_top {
        let color = c.flags.precipitate_color.or_else(|| c.solid_color()).unwrap_or(ColorTag::White).rgb();
        img.fill_rect(x0 + 1, top, x1 - 1, fill.floor, color);
        if c.flags.crystals {
            for y in top..fill.floor {
                for x in x0 + 1..x1 - 1 {
                    if (x + y) % 3 == 0 {
                        img.put(x, y, CRYSTAL_SPECK);
                    }
                }
            }
        }
    }
    if let Some(top) = fill.liquid_top {
        let bottom = fill.solid_top.unwrap_or(fill.floor);
        img.fill_rect(x0 + 1, top, x1 - 1, bottom, c.liquid_color().rgb());
        if c.flags.bubbles {
            for y in top..(top + 8).min(bottom) {
                for x in x0 + 1..x1 - 1 {
                    if x % 4 == 0 && y % 3 == 0 {
                        img.put(x, y, BUBBLE);
                    }
                }
            }
        }
    }

    if c.flags.mist {
        img.fill_rect(x0, y0 - 12, x1, y0, ColorTag::Gray.rgb());
    }
    img.stroke_box(x0, y0, x1 - 1, y1 - 1, 1, OUTLINE);
    if c.flags.heater_on {
        img.fill_rect(x1 - 10, y1 - 8, x1 - 3, y1 - 2, HEATER_ON);
    }
}

fn draw_tool(img: &mut RasterImage, c: &Container) {
    let p = c.pose;
    match c.kind {
        K::Rack => {
            img.stroke_box(p.x, p.y, p.x + p.w - 1, p.y + p.h - 1, 3, tool_color(K::Rack));
        }
        K::AlcoholLamp => {
            img.fill_rect(p.x, p.y, p.x + p.w, p.y + p.h, tool_color(K::AlcoholLamp));
            img.stroke_box(p.x, p.y, p.x + p.w - 1, p.y + p.h - 1, 1, OUTLINE);
            // wick
            img.fill_rect(p.x + p.w / 2 - 1, p.y - 6, p.x + p.w / 2 + 2, p.y, OUTLINE);
        }
        _ => {
            img.fill_rect(p.x, p.y, p.x + p.w, p.y + p.h, tool_color(c.kind));
            if let Some(dep) = c.flags.deposit_color {
                img.fill_rect(p.x, p.y + p.h / 2, p.x + p.w, p.y + p.h, dep.rgb());
            }
        }
    }
    if let Some(f) = c.flags.flame_color {
        img.fill_triangle(p.x + p.w / 2, p.y - 30, 16, 28, ColorTag::Flame(f).rgb());
    }
}

/// Full-resolution front view.
pub fn render_front(scene: &LabScene) -> RasterImage {
    let mut img = RasterImage::new(CANVAS_W, CANVAS_H, WHITE);
    for c in &scene.containers {
        if c.kind.is_vessel() {
            draw_vessel(&mut img, c);
        } else {
            draw_tool(&mut img, c);
        }
    }
    if scene.lamp_lit {
        for c in scene.containers.iter().filter(|c| c.kind == K::AlcoholLamp) {
            img.fill_triangle(c.pose.x + c.pose.w / 2, c.pose.y - 30, 18, 24, FLAME);
        }
    }
    img
}

/// `frame_scale` must divide 160 so every view has integer geometry.
pub fn valid_frame_scale(k: u32) -> bool {
    k > 0 && 160 % k == 0
}

fn derive(front: &RasterImage, view: View, k: u32) -> RasterImage {
    let (w, h) = (CANVAS_W / 2 / k, CANVAS_H / 2 / k);
    match view {
        View::Front => front.clone(),
        View::Top => front.flip_vertical(),
        View::LeftWrist => front.crop(0, 120 / k, w, h).upscale(2),
        View::RightWrist => front.crop(w, 120 / k, w, h).upscale(2),
    }
}

pub fn render_view(scene: &LabScene, view: View, frame_scale: u32) -> RasterImage {
    assert!(valid_frame_scale(frame_scale), "bad frame scale {frame_scale}");
    derive(&render_front(scene).downsample(frame_scale), view, frame_scale)
}

pub fn render_views(scene: &LabScene, frame_scale: u32) -> Views {
    assert!(valid_frame_scale(frame_scale), "bad frame scale {frame_scale}");
    let front = render_front(scene).downsample(frame_scale);
    View::ALL
        .iter()
        .map(|v| (*v, Arc::new(derive(&front, *v, frame_scale))))
        .collect()
}
