//! Minimal deterministic SVG figures: axes, polylines, cell fills, dots and a
//! legend. Element order is insertion order and all numbers are printed with
//! fixed precision, so identical inputs render byte-identical files.

pub(crate) struct Axis {
    pub min: f64,
    pub max: f64,
    pub log: bool,
    pub label: String,
}

impl Axis {
    pub fn new(min: f64, max: f64, log: bool, label: &str) -> Self {
        Self {
            min,
            max,
            log,
            label: label.to_string(),
        }
    }
}

pub(crate) struct Figure {
    width: f64,
    height: f64,
    ml: f64,
    mr: f64,
    mt: f64,
    mb: f64,
    x: Axis,
    y: Axis,
    title: String,
    elements: Vec<String>,
    legend: Vec<(String, String)>,
}

fn fmt_px(v: f64) -> String {
    format!("{v:.2}")
}

/// Compact deterministic tick label.
fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        let exp = a.log10().floor() as i32;
        let mant = v / 10f64.powi(exp);
        if (mant - 1.0).abs() < 1e-9 {
            format!("1e{exp}")
        } else if (mant + 1.0).abs() < 1e-9 {
            format!("-1e{exp}")
        } else {
            format!("{mant:.2}e{exp}")
        }
    } else {
        let s = format!("{v:.4}");
        let s = s.trim_end_matches('0').trim_end_matches('.');
        s.to_string()
    }
}

impl Figure {
    pub fn new(title: &str, x: Axis, y: Axis) -> Self {
        Self {
            width: 860.0,
            height: 560.0,
            ml: 78.0,
            mr: 26.0,
            mt: 44.0,
            mb: 62.0,
            x,
            y,
            title: title.to_string(),
            elements: Vec::new(),
            legend: Vec::new(),
        }
    }

    fn coord(axis: &Axis, v: f64) -> f64 {
        if axis.log {
            let lo = axis.min.log10();
            let hi = axis.max.log10();
            (v.max(f64::MIN_POSITIVE).log10() - lo) / (hi - lo)
        } else {
            (v - axis.min) / (axis.max - axis.min)
        }
    }

    fn map_x(&self, v: f64) -> f64 {
        self.ml + Self::coord(&self.x, v) * (self.width - self.ml - self.mr)
    }

    fn map_y(&self, v: f64) -> f64 {
        self.height - self.mb - Self::coord(&self.y, v) * (self.height - self.mt - self.mb)
    }

    pub fn polyline(&mut self, pts: &[(f64, f64)], color: &str, width: f64) {
        if pts.len() < 2 {
            return;
        }
        // Split at points a log axis cannot represent.
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for &(x, y) in pts {
            let ok = (!self.x.log || x > 0.0)
                && (!self.y.log || y > 0.0)
                && x.is_finite()
                && y.is_finite();
            if ok {
                segments.last_mut().unwrap().push((x, y));
            } else if !segments.last().unwrap().is_empty() {
                segments.push(Vec::new());
            }
        }
        for seg in segments.iter().filter(|s| s.len() >= 2) {
            let coords: Vec<String> = seg
                .iter()
                .map(|&(x, y)| format!("{},{}", fmt_px(self.map_x(x)), fmt_px(self.map_y(y))))
                .collect();
            self.elements.push(format!(
                "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"{width}\" points=\"{}\"/>",
                coords.join(" ")
            ));
        }
    }

    /// Filled data-space rectangle (one raster run).
    pub fn cell_rect(&mut self, x0: f64, x1: f64, y0: f64, y1: f64, color: &str, opacity: f64) {
        let (px0, px1) = (self.map_x(x0), self.map_x(x1));
        let (py0, py1) = (self.map_y(y1), self.map_y(y0));
        self.elements.push(format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"{color}\" fill-opacity=\"{opacity}\"/>",
            fmt_px(px0),
            fmt_px(py0),
            fmt_px((px1 - px0).max(0.5)),
            fmt_px((py1 - py0).max(0.5)),
        ));
    }

    pub fn circle(&mut self, x: f64, y: f64, r: f64, color: &str) {
        self.elements.push(format!(
            "<circle cx=\"{}\" cy=\"{}\" r=\"{r}\" fill=\"{color}\"/>",
            fmt_px(self.map_x(x)),
            fmt_px(self.map_y(y)),
        ));
    }

    pub fn cross(&mut self, x: f64, y: f64, size: f64, color: &str) {
        let (cx, cy) = (self.map_x(x), self.map_y(y));
        self.elements.push(format!(
            "<path d=\"M {} {} L {} {} M {} {} L {} {}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            fmt_px(cx - size),
            fmt_px(cy - size),
            fmt_px(cx + size),
            fmt_px(cy + size),
            fmt_px(cx - size),
            fmt_px(cy + size),
            fmt_px(cx + size),
            fmt_px(cy - size),
        ));
    }

    pub fn hline(&mut self, y: f64, color: &str) {
        let py = self.map_y(y);
        self.elements.push(format!(
            "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"{color}\" stroke-dasharray=\"6 4\"/>",
            fmt_px(self.ml),
            fmt_px(py),
            fmt_px(self.width - self.mr),
            fmt_px(py),
        ));
    }

    pub fn legend(&mut self, color: &str, label: &str) {
        self.legend.push((color.to_string(), label.to_string()));
    }

    fn ticks(axis: &Axis) -> Vec<f64> {
        if axis.log {
            let lo = axis.min.log10().ceil() as i32;
            let hi = axis.max.log10().floor() as i32;
            let n = (hi - lo + 1).max(1);
            let step = ((n as f64) / 9.0).ceil() as i32;
            (lo..=hi)
                .step_by(step.max(1) as usize)
                .map(|e| 10f64.powi(e))
                .collect()
        } else {
            (0..=4)
                .map(|i| axis.min + i as f64 * (axis.max - axis.min) / 4.0)
                .collect()
        }
    }

    pub fn render(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            w = self.width,
            h = self.height
        ));
        out.push_str(&format!("<desc>config_hash {config_hash}</desc>\n"));
        out.push_str(&format!(
            "<rect x=\"0\" y=\"0\" width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
            self.width, self.height
        ));
        let (px0, px1) = (self.ml, self.width - self.mr);
        let (py0, py1) = (self.mt, self.height - self.mb);
        out.push_str(&format!(
            "<defs><clipPath id=\"plot\"><rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\"/></clipPath></defs>\n",
            fmt_px(px0),
            fmt_px(py0),
            fmt_px(px1 - px0),
            fmt_px(py1 - py0)
        ));
        // Grid and ticks.
        for tx in Self::ticks(&self.x) {
            let px = self.map_x(tx);
            out.push_str(&format!(
                "<line x1=\"{x}\" y1=\"{}\" x2=\"{x}\" y2=\"{}\" stroke=\"#dddddd\"/>\n",
                fmt_px(py0),
                fmt_px(py1),
                x = fmt_px(px)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
                fmt_px(px),
                fmt_px(py1 + 18.0),
                fmt_tick(tx)
            ));
        }
        for ty in Self::ticks(&self.y) {
            let py = self.map_y(ty);
            out.push_str(&format!(
                "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"#dddddd\"/>\n",
                fmt_px(px0),
                fmt_px(px1),
                y = fmt_px(py)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"end\" fill=\"#333333\">{}</text>\n",
                fmt_px(px0 - 6.0),
                fmt_px(py + 4.0),
                fmt_tick(ty)
            ));
        }
        // Frame.
        out.push_str(&format!(
            "<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"#000000\"/>\n",
            fmt_px(px0),
            fmt_px(py0),
            fmt_px(px1 - px0),
            fmt_px(py1 - py0)
        ));
        // Data elements, clipped to the plot area.
        out.push_str("<g clip-path=\"url(#plot)\">\n");
        for el in &self.elements {
            out.push_str(el);
            out.push('\n');
        }
        out.push_str("</g>\n");
        // Labels.
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
            fmt_px((px0 + px1) / 2.0),
            fmt_px(self.mt - 16.0),
            self.title
        ));
        out.push_str(&format!(
            "<text x=\"{}\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\">{}</text>\n",
            fmt_px((px0 + px1) / 2.0),
            fmt_px(self.height - 16.0),
            self.x.label
        ));
        out.push_str(&format!(
            "<text x=\"18\" y=\"{}\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 18 {})\">{}</text>\n",
            fmt_px((py0 + py1) / 2.0),
            fmt_px((py0 + py1) / 2.0),
            self.y.label
        ));
        // Legend, top-right inside the frame.
        for (i, (color, label)) in self.legend.iter().enumerate() {
            let ly = py0 + 16.0 + 18.0 * i as f64;
            out.push_str(&format!(
                "<rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
                fmt_px(px1 - 190.0),
                fmt_px(ly - 10.0)
            ));
            out.push_str(&format!(
                "<text x=\"{}\" y=\"{}\" font-size=\"12\">{}</text>\n",
                fmt_px(px1 - 172.0),
                fmt_px(ly),
                label
            ));
        }
        out.push_str("</svg>\n");
        out
    }
}
