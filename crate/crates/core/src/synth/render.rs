use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const IMAGE_SIZE: usize = 32;
pub const CHANNELS: usize = 3;
pub const AGE_CATEGORIES: usize = 6;
pub const IDENTITY_FACTORS: usize = 8;
/// Number of wrinkle lines drawn at the oldest category.
pub const MAX_WRINKLES: usize = 5;
pub const SAG_PER_CATEGORY: f64 = 0.4;

const AGE_LABELS: [&str; AGE_CATEGORIES] = ["0-18", "19-29", "30-39", "40-49", "50-59", "60+"];
const GREY_HAIR: [f64; 3] = [0.74, 0.74, 0.74];
const HAIR_CHROMA: f64 = 0.45;
const WRINKLE_SHADE: f64 = 0.5;
const EYE_COLOR: [f64; 3] = [0.08, 0.08, 0.14];
const MOUTH_COLOR: [f64; 3] = [0.72, 0.2, 0.25];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AgeCategory(usize);

impl AgeCategory {
    pub fn new(index: usize) -> Result<Self> {
        if index < AGE_CATEGORIES {
            Ok(Self(index))
        } else {
            Err(Error::InvalidArgument(format!(
                "age category {index} out of range 0..{}",
                AGE_CATEGORIES - 1
            )))
        }
    }

    pub fn all() -> impl Iterator<Item = AgeCategory> {
        (0..AGE_CATEGORIES).map(AgeCategory)
    }

    pub fn index(self) -> usize {
        self.0
    }

    pub fn label(self) -> &'static str {
        AGE_LABELS[self.0]
    }

    pub fn one_hot(self) -> [f32; AGE_CATEGORIES] {
        let mut v = [0.0; AGE_CATEGORIES];
        v[self.0] = 1.0;
        v
    }
}

impl std::fmt::Display for AgeCategory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.0, self.label())
    }
}

/// Eight identity factors, each in `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IdentityParams {
    pub face_width: f64,
    pub face_height: f64,
    pub eye_spacing: f64,
    pub eye_size: f64,
    pub nose_length: f64,
    pub mouth_width: f64,
    pub skin_tone: f64,
    pub hair_tone: f64,
}

impl IdentityParams {
    pub fn from_factors(f: [f64; IDENTITY_FACTORS]) -> Self {
        Self {
            face_width: f[0],
            face_height: f[1],
            eye_spacing: f[2],
            eye_size: f[3],
            nose_length: f[4],
            mouth_width: f[5],
            skin_tone: f[6],
            hair_tone: f[7],
        }
    }

    pub fn factors(&self) -> [f64; IDENTITY_FACTORS] {
        [
            self.face_width,
            self.face_height,
            self.eye_spacing,
            self.eye_size,
            self.nose_length,
            self.mouth_width,
            self.skin_tone,
            self.hair_tone,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors().iter().all(|v| (0.0..=1.0).contains(v)) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "identity factors outside [0, 1]: {self:?}"
            )))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NuisanceParams {
    /// In `[0, 1]`.
    pub background: f64,
    /// Pixel shift per axis in `-2..=2`.
    pub shift_x: i32,
    pub shift_y: i32,
    /// Additive, in `[-0.1, 0.1]`.
    pub brightness: f64,
}

impl Default for NuisanceParams {
    fn default() -> Self {
        Self {
            background: 0.5,
            shift_x: 0,
            shift_y: 0,
            brightness: 0.0,
        }
    }
}

impl NuisanceParams {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.background)
            && (-2..=2).contains(&self.shift_x)
            && (-2..=2).contains(&self.shift_y)
            && (-0.1..=0.1).contains(&self.brightness);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "nuisance parameters out of range: {self:?}"
            )))
        }
    }
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [0, 1, 2].map(|c| a[c] + (b[c] - a[c]) * t)
}

fn scale3(a: [f64; 3], s: f64) -> [f64; 3] {
    a.map(|v| v * s)
}

fn skin_color(tone: f64) -> [f64; 3] {
    lerp3([0.97, 0.82, 0.70], [0.42, 0.28, 0.18], tone)
}

/// Hue sweeps from dark auburn to golden blond at a fixed chroma, so greying
/// reduces saturation the same way for every hair colour.
fn hair_color(tone: f64) -> [f64; 3] {
    let value = 0.5 + 0.45 * tone;
    let hue = 10.0 + 38.0 * tone;
    let min = value - HAIR_CHROMA;
    let mid = min + HAIR_CHROMA * hue / 60.0;
    [value, mid, min]
}

fn background_color(tone: f64) -> [f64; 3] {
    lerp3([0.12, 0.18, 0.3], [0.88, 0.88, 0.82], tone)
}

/// Which age-dependent element, if any, a pixel belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Region {
    Background,
    Hair,
    Skin,
    Wrinkle,
    Eye,
    Nose,
    Mouth,
}

struct Layout {
    cx: f64,
    cy: f64,
    rx: f64,
    ry: f64,
    hairline: f64,
    eye_dx: f64,
    eye_r: f64,
    nose_len: i32,
    mouth_half: i32,
    icx: i32,
    icy: i32,
}

impl Layout {
    fn new(id: &IdentityParams, nuis: &NuisanceParams) -> Self {
        let icx = 16 + nuis.shift_x;
        let icy = 15 + nuis.shift_y;
        let ry = 8.0 + 2.0 * id.face_height;
        Self {
            cx: icx as f64,
            cy: icy as f64,
            rx: 6.0 + 2.5 * id.face_width,
            ry,
            hairline: icy as f64 - 0.6 * ry,
            eye_dx: 2.0 + 1.5 * id.eye_spacing,
            eye_r: 0.8 + 0.8 * id.eye_size,
            nose_len: 1 + (2.0 * id.nose_length).round() as i32,
            mouth_half: 1 + (3.0 * id.mouth_width).round() as i32,
            icx,
            icy,
        }
    }

    fn in_face(&self, px: f64, py: f64, sag: f64) -> bool {
        let ry = if py > self.cy { self.ry + sag } else { self.ry };
        let (dx, dy) = ((px - self.cx) / self.rx, (py - self.cy) / ry);
        dx * dx + dy * dy <= 1.0
    }

    fn in_hair_shell(&self, px: f64, py: f64) -> bool {
        let (dx, dy) = (
            (px - self.cx) / (self.rx + 1.5),
            (py - self.cy + 1.0) / (self.ry + 1.5),
        );
        dx * dx + dy * dy <= 1.0 && py < self.cy + 2.0
    }

    /// Pixels of wrinkle line `k` (0-based), in draw order.
    fn on_wrinkle(&self, k: usize, col: i32, row: i32) -> bool {
        let (x, y) = (col - self.icx, row - self.icy);
        match k {
            0 => y == -4 && x.abs() <= 3,
            1 => y == -2 && x.abs() <= 3,
            2 => x == -4 && (2..=3).contains(&y),
            3 => x == 4 && (2..=3).contains(&y),
            4 => y == 7 && x.abs() <= 2,
            _ => false,
        }
    }

    fn classify(&self, col: i32, row: i32, age: usize) -> Region {
        let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
        let sag = SAG_PER_CATEGORY * age as f64;
        if !self.in_face(px, py, sag) {
            return if self.in_hair_shell(px, py) {
                Region::Hair
            } else {
                Region::Background
            };
        }
        if py < self.hairline {
            return Region::Hair;
        }
        let (x, y) = (col - self.icx, row - self.icy);
        for side in [-1.0, 1.0] {
            let (ex, ey) = (px - (self.cx + side * self.eye_dx), py - self.cy);
            if ex * ex + ey * ey <= self.eye_r * self.eye_r {
                return Region::Eye;
            }
        }
        if x == 0 && (0..=self.nose_len).contains(&y) {
            return Region::Nose;
        }
        if y == 5 && x.abs() <= self.mouth_half {
            return Region::Mouth;
        }
        if (0..age.min(MAX_WRINKLES)).any(|k| self.on_wrinkle(k, col, row)) {
            return Region::Wrinkle;
        }
        Region::Skin
    }
}

fn quantize(v: f64) -> f32 {
    let k = (v.clamp(0.0, 1.0) * 255.0).round();
    byte_to_pixel(k as u8)
}

/// Map an 8-bit channel value to `[-1, 1]`.
pub fn byte_to_pixel(k: u8) -> f32 {
    k as f32 / 127.5 - 1.0
}

pub fn pixel_to_byte(v: f32) -> u8 {
    ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8
}

/// Render one `3×32×32` face in `[-1, 1]`. Channel values are quantized to
/// the 8-bit grid so a PNG round trip is lossless.
pub fn render_avatar(
    id: &IdentityParams,
    age: AgeCategory,
    nuis: &NuisanceParams,
) -> Result<Tensor> {
    id.validate()?;
    nuis.validate()?;
    let layout = Layout::new(id, nuis);
    let skin = skin_color(id.skin_tone);
    let hair = lerp3(
        hair_color(id.hair_tone),
        GREY_HAIR,
        age.index() as f64 / 5.0,
    );
    let background = background_color(nuis.background);
    let n = IMAGE_SIZE * IMAGE_SIZE;
    let mut data = vec![0.0f32; CHANNELS * n];
    for row in 0..IMAGE_SIZE {
        for col in 0..IMAGE_SIZE {
            let rgb = match layout.classify(col as i32, row as i32, age.index()) {
                Region::Background => background,
                Region::Hair => hair,
                Region::Skin => skin,
                Region::Wrinkle => scale3(skin, WRINKLE_SHADE),
                Region::Eye => EYE_COLOR,
                Region::Nose => scale3(skin, 0.78),
                Region::Mouth => MOUTH_COLOR,
            };
            for c in 0..CHANNELS {
                data[c * n + row * IMAGE_SIZE + col] = quantize(rgb[c] + nuis.brightness);
            }
        }
    }
    Tensor::new(vec![CHANNELS, IMAGE_SIZE, IMAGE_SIZE], data)
}

/// Pixels (row-major, `32×32`) whose colour may depend on the age category
/// for this identity and nuisance: hair, wrinkle lines and the chin band
/// covered by sag.
pub fn age_mask(id: &IdentityParams, nuis: &NuisanceParams) -> Vec<bool> {
    let layout = Layout::new(id, nuis);
    let max_sag = SAG_PER_CATEGORY * (AGE_CATEGORIES - 1) as f64;
    let mut mask = vec![false; IMAGE_SIZE * IMAGE_SIZE];
    for row in 0..IMAGE_SIZE as i32 {
        for col in 0..IMAGE_SIZE as i32 {
            let (px, py) = (col as f64 + 0.5, row as f64 + 0.5);
            let hair = (0..AGE_CATEGORIES).any(|a| layout.classify(col, row, a) == Region::Hair);
            let wrinkle = (0..MAX_WRINKLES).any(|k| layout.on_wrinkle(k, col, row));
            let sag = layout.in_face(px, py, max_sag) != layout.in_face(px, py, 0.0);
            mask[row as usize * IMAGE_SIZE + col as usize] = hair || wrinkle || sag;
        }
    }
    mask
}
