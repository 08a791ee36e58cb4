//! Pixel domains and the fields that live on them.
//!
//! A [`GridDomain`] is a rectangular grid of square pixels of side `h` with a
//! boolean mask marking the pixels whose centers lie inside Ω. Every generator
//! frames its shape with at least two rows/columns of `false` pixels on each
//! side, so a field that vanishes off the mask is the zero extension of a
//! function on Ω and forward differences against the padding pick up the
//! boundary jump.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of guaranteed `false` rows/columns around every generated shape.
pub const PAD: usize = 2;

/// Rectangular pixel grid with an inside-Ω mask.
///
/// Pixel `(i, j)` (column `i`, row `j`, rows counted upward) has its center at
/// `origin + ((i + 0.5) h, (j + 0.5) h)` and is stored at index `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDomain {
    nx: usize,
    ny: usize,
    h: f64,
    origin: (f64, f64),
    mask: Vec<bool>,
}

impl GridDomain {
    /// Checked constructor.
    pub fn new(nx: usize, ny: usize, h: f64, origin: (f64, f64), mask: Vec<bool>) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid must be at least 2x2, got {nx}x{ny}"
            )));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidParameter(format!("pixel size h must be positive, got {h}")));
        }
        if !(origin.0.is_finite() && origin.1.is_finite()) {
            return Err(Error::InvalidParameter("non-finite grid origin".into()));
        }
        if mask.len() != nx * ny {
            return Err(Error::InvalidParameter(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                nx * ny
            )));
        }
        if !mask.iter().any(|&b| b) {
            return Err(Error::EmptyMask);
        }
        Ok(Self { nx, ny, h, origin, mask })
    }

    /// Builds a padded domain from rows of `'1'`/`'0'` (or `'#'`/`'.'`)
    /// characters, top row first. Handy for tiny hand-written fixtures.
    pub fn from_rows<S: AsRef<str>>(rows: &[S], h: f64) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map(|r| r.as_ref().chars().count()).unwrap_or(0);
        if height == 0 || width == 0 {
            return Err(Error::EmptyMask);
        }
        let nx = width + 2 * PAD;
        let ny = height + 2 * PAD;
        let mut mask = vec![false; nx * ny];
        for (r, row) in rows.iter().enumerate() {
            let row = row.as_ref();
            if row.chars().count() != width {
                return Err(Error::InvalidParameter("ragged mask rows".into()));
            }
            let j = PAD + height - 1 - r;
            for (c, ch) in row.chars().enumerate() {
                let inside = match ch {
                    '1' | '#' => true,
                    '0' | '.' => false,
                    other => {
                        return Err(Error::InvalidParameter(format!("bad mask character {other:?}")))
                    }
                };
                mask[j * nx + PAD + c] = inside;
            }
        }
        let origin = (-(PAD as f64) * h, -(PAD as f64) * h);
        Self::new(nx, ny, h, origin, mask)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Total number of grid pixels (inside and outside Ω).
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.h,
            self.origin.1 + (j as f64 + 0.5) * self.h,
        )
    }

    #[inline]
    pub fn inside(&self, idx: usize) -> bool {
        self.mask[idx]
    }

    /// Number of pixels inside Ω.
    pub fn pixel_count(&self) -> usize {
        self.mask.iter().filter(|&&b| b).count()
    }

    /// Discrete area of Ω.
    pub fn area(&self) -> f64 {
        self.pixel_count() as f64 * self.h * self.h
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    /// Rasterizes `inside` on a grid framing the box `[xmin, xmax] x [ymin, ymax]`.
    /// The frame is centered on the box, so shapes symmetric about the box
    /// center yield symmetric masks.
    fn framed(
        bbox: (f64, f64, f64, f64),
        h: f64,
        inside: impl Fn(f64, f64) -> bool,
    ) -> Result<Self> {
        let (xmin, ymin, xmax, ymax) = bbox;
        let cells = |extent: f64| ((extent / h) - 1e-9).ceil().max(1.0) as usize + 2 * PAD;
        let nx = cells(xmax - xmin);
        let ny = cells(ymax - ymin);
        let origin = (
            0.5 * (xmin + xmax) - 0.5 * nx as f64 * h,
            0.5 * (ymin + ymax) - 0.5 * ny as f64 * h,
        );
        let mut mask = vec![false; nx * ny];
        for j in 0..ny {
            let y = origin.1 + (j as f64 + 0.5) * h;
            for i in 0..nx {
                let x = origin.0 + (i as f64 + 0.5) * h;
                mask[j * nx + i] = inside(x, y);
            }
        }
        Self::new(nx, ny, h, origin, mask)
    }
}

fn check_h(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("pixel size h must be positive, got {h}")))
    }
}

/// Disc of the given radius centered at the origin.
pub fn make_disc(radius: f64, h: f64) -> Result<GridDomain> {
    check_h(h)?;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidParameter(format!("radius must be positive, got {radius}")));
    }
    if radius < 4.0 * h {
        return Err(Error::ResolutionTooCoarse(format!(
            "disc radius {radius} is below 4 pixels of size {h}"
        )));
    }
    let r2 = radius * radius;
    GridDomain::framed((-radius, -radius, radius, radius), h, |x, y| x * x + y * y <= r2)
}

/// Axis-aligned square `[0, side]^2`.
pub fn make_square(side: f64, h: f64) -> Result<GridDomain> {
    check_h(h)?;
    if !(side.is_finite() && side > 0.0) {
        return Err(Error::InvalidParameter(format!("side must be positive, got {side}")));
    }
    if side < 8.0 * h {
        return Err(Error::ResolutionTooCoarse(format!(
            "square side {side} is below 8 pixels of size {h}"
        )));
    }
    make_rectangle(side, side, h)
}

/// Axis-aligned rectangle `[0, width] x [0, height]`.
pub fn make_rectangle(width: f64, height: f64, h: f64) -> Result<GridDomain> {
    check_h(h)?;
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(Error::InvalidParameter("rectangle sides must be positive".into()));
    }
    GridDomain::framed((0.0, 0.0, width, height), h, |x, y| {
        (0.0..=width).contains(&x) && (0.0..=height).contains(&y)
    })
}

/// Barbell `[0,a]^2 ∪ [a,2a]x[0,ε] ∪ [2a,3a-δ]x[0,a-δ]`.
///
/// `shrink = 0` gives the symmetric barbell, `shrink > 0` shrinks the right
/// square to side `a - δ`.
pub fn make_barbell(square_side: f64, neck_height: f64, shrink: f64, h: f64) -> Result<GridDomain> {
    check_h(h)?;
    let a = square_side;
    let eps = neck_height;
    let delta = shrink;
    if !(a.is_finite() && a > 0.0) {
        return Err(Error::InvalidParameter(format!("square side must be positive, got {a}")));
    }
    if !(eps > 0.0 && eps < a) {
        return Err(Error::InvalidParameter(format!(
            "neck height must lie in (0, {a}), got {eps}"
        )));
    }
    if !(delta >= 0.0 && delta < 0.5 * a) {
        return Err(Error::InvalidParameter(format!(
            "shrink must lie in [0, {}), got {delta}",
            0.5 * a
        )));
    }
    if eps < 2.0 * h {
        return Err(Error::ResolutionTooCoarse(format!(
            "neck of height {eps} is thinner than 2 pixels of size {h}"
        )));
    }
    if a - delta < 8.0 * h {
        return Err(Error::ResolutionTooCoarse(format!(
            "barbell squares are below 8 pixels of size {h}"
        )));
    }
    let in_box = |x: f64, y: f64, x0: f64, x1: f64, y1: f64| x >= x0 && x <= x1 && y >= 0.0 && y <= y1;
    GridDomain::framed((0.0, 0.0, 3.0 * a - delta, a), h, |x, y| {
        in_box(x, y, 0.0, a, a)
            || in_box(x, y, a, 2.0 * a, eps)
            || in_box(x, y, 2.0 * a, 3.0 * a - delta, a - delta)
    })
}

/// A parametric domain, written `disc:r`, `square:s` or
/// `barbell:a,eps,delta` on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Shape {
    Disc { radius: f64 },
    Square { side: f64 },
    Barbell { side: f64, neck: f64, shrink: f64 },
}

impl Shape {
    pub fn domain(&self, h: f64) -> Result<GridDomain> {
        match *self {
            Shape::Disc { radius } => make_disc(radius, h),
            Shape::Square { side } => make_square(side, h),
            Shape::Barbell { side, neck, shrink } => make_barbell(side, neck, shrink, h),
        }
    }

    /// The same shape with every length multiplied by `k`.
    pub fn scaled(&self, k: f64) -> Self {
        match *self {
            Shape::Disc { radius } => Shape::Disc { radius: k * radius },
            Shape::Square { side } => Shape::Square { side: k * side },
            Shape::Barbell { side, neck, shrink } => Shape::Barbell { side: k * side, neck: k * neck, shrink: k * shrink },
        }
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Disc { radius } => write!(f, "disc:{radius}"),
            Shape::Square { side } => write!(f, "square:{side}"),
            Shape::Barbell { side, neck, shrink } => write!(f, "barbell:{side},{neck},{shrink}"),
        }
    }
}

impl std::str::FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("unknown shape {s:?}; expected disc:r, square:s or barbell:a,eps,delta"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums = args.split(',').map(|x| x.trim().parse::<f64>()).collect::<std::result::Result<Vec<_>, _>>();
        let nums = nums.map_err(|_| bad())?;
        match (kind, nums.as_slice()) {
            ("disc", &[radius]) => Ok(Shape::Disc { radius }),
            ("square", &[side]) => Ok(Shape::Square { side }),
            ("barbell", &[side, neck, shrink]) => Ok(Shape::Barbell { side, neck, shrink }),
            _ => Err(bad()),
        }
    }
}

/// Loads an 8-bit grayscale PNG; a pixel is inside Ω iff its gray value
/// exceeds 127. The image's top row becomes the highest grid row.
pub fn load_mask(path: impl AsRef<Path>, h: f64) -> Result<GridDomain> {
    check_h(h)?;
    let path = path.as_ref();
    let img = image::ImageReader::open(path)
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?
        .with_guessed_format()
        .map_err(|source| Error::Io { path: path.to_path_buf(), source })?
        .decode()
        .map_err(|e| Error::Image { path: path.to_path_buf(), reason: e.to_string() })?;
    let gray = match img {
        image::DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::Image {
                path: path.to_path_buf(),
                reason: format!("expected 8-bit grayscale, found {:?}", other.color()),
            })
        }
    };
    let (w, hgt) = (gray.width() as usize, gray.height() as usize);
    let nx = w + 2 * PAD;
    let ny = hgt + 2 * PAD;
    let mut mask = vec![false; nx * ny];
    for (x, y, px) in gray.enumerate_pixels() {
        let i = PAD + x as usize;
        let j = PAD + (hgt - 1 - y as usize);
        mask[j * nx + i] = px.0[0] > 127;
    }
    if !mask.iter().any(|&b| b) {
        return Err(Error::EmptyMask);
    }
    GridDomain::new(nx, ny, h, (-(PAD as f64) * h, -(PAD as f64) * h), mask)
}

/// Polygon document: `{"h": real, "polygons": [[[x, y], ...], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolygonSpec {
    pub h: f64,
    pub polygons: Vec<Vec<[f64; 2]>>,
}

impl PolygonSpec {
    pub fn from_json_str(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|source| Error::Io { path: path.to_path_buf(), source })?;
        Self::from_json_str(&text).map_err(|source| Error::Json { path: path.to_path_buf(), source })
    }
}

/// Rasterizes the polygons with the even-odd rule at pixel centers.
pub fn rasterize_polygon(spec: &PolygonSpec) -> Result<GridDomain> {
    check_h(spec.h)?;
    if spec.polygons.is_empty() {
        return Err(Error::DegeneratePolygon(0));
    }
    let mut bbox = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for poly in &spec.polygons {
        if poly.len() < 3 {
            return Err(Error::DegeneratePolygon(poly.len()));
        }
        for &[x, y] in poly {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::InvalidParameter("non-finite polygon vertex".into()));
            }
            bbox.0 = bbox.0.min(x);
            bbox.1 = bbox.1.min(y);
            bbox.2 = bbox.2.max(x);
            bbox.3 = bbox.3.max(y);
        }
    }
    GridDomain::framed(bbox, spec.h, |x, y| {
        spec.polygons.iter().filter(|p| crosses_odd(p, x, y)).count() % 2 == 1
    })
}

/// Even-odd crossing test for a single ring.
fn crosses_odd(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let [xi, yi] = poly[i];
        let [xj, yj] = poly[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Real-valued field on a [`GridDomain`], identically zero off the mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(domain: &Arc<GridDomain>) -> Self {
        Self { domain: Arc::clone(domain), values: vec![0.0; domain.len()] }
    }

    /// Checked constructor: values must be finite and vanish off the mask.
    pub fn new(domain: &Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::FieldMismatch(format!(
                "{} values for a grid of {} pixels",
                values.len(),
                domain.len()
            )));
        }
        for (k, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::FieldMismatch(format!("non-finite value at pixel {k}")));
            }
            if !domain.inside(k) && v != 0.0 {
                return Err(Error::FieldMismatch(format!("nonzero value off the mask at pixel {k}")));
            }
        }
        Ok(Self { domain: Arc::clone(domain), values })
    }

    /// Takes raw values and zeroes everything off the mask.
    pub fn masked(domain: &Arc<GridDomain>, mut values: Vec<f64>) -> Self {
        assert_eq!(values.len(), domain.len(), "field size does not match grid");
        for (v, &m) in values.iter_mut().zip(domain.mask()) {
            if !m {
                *v = 0.0;
            }
        }
        Self { domain: Arc::clone(domain), values }
    }

    /// Samples `f` at pixel centers inside Ω.
    pub fn from_fn(domain: &Arc<GridDomain>, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = vec![0.0; domain.len()];
        for j in 0..domain.ny() {
            for i in 0..domain.nx() {
                let k = domain.index(i, j);
                if domain.inside(k) {
                    let (x, y) = domain.center(i, j);
                    values[k] = f(x, y);
                }
            }
        }
        Self { domain: Arc::clone(domain), values }
    }

    /// Indicator of `set ∩ Ω`.
    pub fn indicator(domain: &Arc<GridDomain>, set: &[bool]) -> Self {
        assert_eq!(set.len(), domain.len(), "set size does not match grid");
        let values = set
            .iter()
            .zip(domain.mask())
            .map(|(&s, &m)| if s && m { 1.0 } else { 0.0 })
            .collect();
        Self { domain: Arc::clone(domain), values }
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Discrete L¹ norm `h² Σ |f|`.
    pub fn l1_norm(&self) -> f64 {
        let h2 = self.domain.h() * self.domain.h();
        h2 * self.values.iter().map(|v| v.abs()).sum::<f64>()
    }

    /// Discrete integral `h² Σ f`.
    pub fn integral(&self) -> f64 {
        let h2 = self.domain.h() * self.domain.h();
        h2 * self.values.iter().sum::<f64>()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { domain: Arc::clone(&self.domain), values: self.values.iter().map(|v| c * v).collect() }
    }

    /// Pointwise map; the result is re-masked.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::masked(&self.domain, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Super-level set `{f > t}` as a pixel mask.
    pub fn superlevel(&self, t: f64) -> Vec<bool> {
        self.values.iter().map(|&v| v > t).collect()
    }
}

/// Ordered list of N fields on one domain; the discrete candidate
/// `u = (u¹, …, u^N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiField {
    components: Vec<ScalarField>,
}

impl MultiField {
    pub fn new(components: Vec<ScalarField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidParameter("a multi-field needs at least one component".into()))?;
        for c in &components[1..] {
            if !Arc::ptr_eq(c.domain(), first.domain()) && **c.domain() != **first.domain() {
                return Err(Error::FieldMismatch("components live on different domains".into()));
            }
        }
        Ok(Self { components })
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        self.components[0].domain()
    }

    pub fn component(&self, i: usize) -> &ScalarField {
        &self.components[i]
    }

    pub fn components(&self) -> &[ScalarField] {
        &self.components
    }

    pub fn into_components(self) -> Vec<ScalarField> {
        self.components
    }
}
