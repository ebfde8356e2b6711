//! Deterministic synthetic UI corpus with known group ground truth.
//!
//! Screens are composed of group patterns (icon+caption pairs, banners with
//! a thumbnail and text lines, stacked list rows) plus distractors that do
//! NOT form groups: standalone shapes, standalone texts, and decoy pairs that
//! look exactly like icon+caption groups but are rendered through the same
//! code path with non-group vocabulary. Decoys are what make text content
//! informative: visually a decoy is indistinguishable from a real group, so
//! only the token identity separates them.
//!
//! Pseudo-text is drawn as filled glyph blocks; detection needs texture, not
//! legibility. Everything is derived from the spec seed, per screen, so the
//! corpus is reproducible pixel for pixel.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::draft::{Artboard, DesignDraft, Layer, LayerKind};
use crate::error::{Error, Result};
use crate::types::{GroupLabel, NormBox, Rect, ScreenSample, TextLayerRecord};

/// Probability that a group text draws from the group vocabulary (and a
/// non-group text from the neutral vocabulary).
pub const TOKEN_GROUP_CORRELATION: f64 = 0.9;

/// Screens per synthetic package, for package-wise splitting.
pub const SCREENS_PER_PACKAGE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pattern {
    IconCaption,
    Banner,
    ListRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_screens: usize,
    /// Inclusive min/max pixels per axis.
    pub size_range: (u32, u32),
    pub patterns: Vec<Pattern>,
    pub distractor_density: f64,
    pub vocab_size: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            seed: 0,
            n_screens: 16,
            size_range: (256, 320),
            patterns: vec![Pattern::IconCaption, Pattern::Banner, Pattern::ListRow],
            distractor_density: 1.0,
            vocab_size: 40,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_screens == 0 {
            return Err(Error::InvalidSpec("n_screens must be positive".into()));
        }
        if self.size_range.0 < 256 {
            return Err(Error::InvalidSpec(format!(
                "minimum screen size is 256, got {}",
                self.size_range.0
            )));
        }
        if self.size_range.0 > self.size_range.1 {
            return Err(Error::InvalidSpec("size_range min exceeds max".into()));
        }
        if self.patterns.is_empty() {
            return Err(Error::InvalidSpec("at least one pattern required".into()));
        }
        if self.vocab_size < 4 {
            return Err(Error::InvalidSpec("vocab_size must be at least 4".into()));
        }
        if !(self.distractor_density >= 0.0) {
            return Err(Error::InvalidSpec("distractor_density must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Shape,
    Text,
}

/// One drawn element, recorded for the placement log and draft dumps.
#[derive(Debug, Clone)]
pub struct Element {
    pub kind: ElementKind,
    pub rect: Rect,
    pub content: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlacementTag {
    Group(Pattern),
    DecoyPair,
    LoneShape,
    LoneText,
}

/// One placed unit: a group instance or a distractor.
#[derive(Debug, Clone)]
pub struct Placement {
    pub tag: PlacementTag,
    /// Ground-truth box for groups, occupied extent for distractors.
    pub rect: Rect,
    pub elements: Vec<Element>,
}

impl Placement {
    pub fn is_group(&self) -> bool {
        matches!(self.tag, PlacementTag::Group(_))
    }
}

#[derive(Debug, Clone)]
pub struct ScreenLog {
    pub sample_id: String,
    pub width: u32,
    pub height: u32,
    pub placements: Vec<Placement>,
}

/// Full placement log of a generated corpus.
#[derive(Debug, Clone, Default)]
pub struct GenLog {
    pub screens: Vec<ScreenLog>,
}

impl GenLog {
    pub fn total_groups(&self) -> usize {
        self.screens
            .iter()
            .map(|s| s.placements.iter().filter(|p| p.is_group()).count())
            .sum()
    }

    pub fn total_texts(&self) -> usize {
        self.screens
            .iter()
            .flat_map(|s| &s.placements)
            .flat_map(|p| &p.elements)
            .filter(|e| e.kind == ElementKind::Text)
            .count()
    }
}

fn mix64(seed: u64, tag: &str, n: u64) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in tag.as_bytes() {
        h ^= *b as u64;
        h = h.wrapping_mul(0x1_0000_0000_01b3);
    }
    h ^= n;
    h = h.wrapping_mul(0x1_0000_0000_01b3);
    h
}

/// Seeded pseudo-word vocabulary; the first half is the group vocabulary.
pub fn build_vocab(seed: u64, size: usize) -> Vec<String> {
    let mut rng = ChaCha20Rng::seed_from_u64(mix64(seed, "vocab", 0));
    let consonants = ['b', 'd', 'f', 'g', 'k', 'l', 'm', 'n', 'p', 'r', 's', 't', 'v', 'z'];
    let vowels = ['a', 'e', 'i', 'o', 'u'];
    let mut vocab = Vec::with_capacity(size);
    while vocab.len() < size {
        let syllables = rng.gen_range(2..=4);
        let mut word = String::new();
        for _ in 0..syllables {
            word.push(consonants[rng.gen_range(0..consonants.len())]);
            word.push(vowels[rng.gen_range(0..vowels.len())]);
        }
        if !vocab.contains(&word) {
            vocab.push(word);
        }
    }
    vocab
}

struct Vocab {
    words: Vec<String>,
}

impl Vocab {
    fn group_range(&self) -> std::ops::Range<usize> {
        0..self.words.len() / 2
    }

    fn neutral_range(&self) -> std::ops::Range<usize> {
        self.words.len() / 2..self.words.len()
    }

    /// Draw text content for a group (or non-group) element.
    fn draw(&self, rng: &mut ChaCha20Rng, grouplike: bool, n_tokens: usize) -> String {
        let from_group = rng.gen_bool(TOKEN_GROUP_CORRELATION) == grouplike;
        let range = if from_group { self.group_range() } else { self.neutral_range() };
        (0..n_tokens)
            .map(|_| self.words[rng.gen_range(range.clone())].clone())
            .collect::<Vec<_>>()
            .join(" ")
    }
}

// ---- drawing ----

fn fill_rect(img: &mut RgbImage, r: &Rect, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = (r.x as i64).clamp(0, w);
    let y0 = (r.y as i64).clamp(0, h);
    let x1 = (r.right().ceil() as i64).clamp(0, w);
    let y1 = (r.bottom().ceil() as i64).clamp(0, h);
    for y in y0..y1 {
        for x in x0..x1 {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

fn outline_rect(img: &mut RgbImage, r: &Rect, color: Rgb<u8>) {
    fill_rect(img, &Rect::new(r.x, r.y, r.w, 1.0), color);
    fill_rect(img, &Rect::new(r.x, r.bottom() - 1.0, r.w, 1.0), color);
    fill_rect(img, &Rect::new(r.x, r.y, 1.0, r.h), color);
    fill_rect(img, &Rect::new(r.right() - 1.0, r.y, 1.0, r.h), color);
}

fn darker(c: Rgb<u8>) -> Rgb<u8> {
    Rgb([c.0[0].saturating_sub(60), c.0[1].saturating_sub(60), c.0[2].saturating_sub(60)])
}

fn draw_icon(img: &mut RgbImage, r: &Rect, color: Rgb<u8>) {
    fill_rect(img, r, color);
    outline_rect(img, r, darker(color));
    // small notch so icons are not flat squares
    let notch = Rect::new(r.x + r.w * 0.55, r.y + r.h * 0.15, r.w * 0.3, r.h * 0.3);
    fill_rect(img, &notch, darker(color));
}

/// Per-character bar shapes give text its ragged look. The bar pattern is
/// derived from the glyph position, not the content, so two texts of equal
/// length are visually interchangeable and only their recorded content
/// differs.
fn draw_pseudo_text(img: &mut RgbImage, x: f64, y: f64, char_h: f64, content: &str, color: Rgb<u8>) -> Rect {
    let mut cx = x;
    let char_w = (char_h * 0.55).max(2.0).round();
    for (i, ch) in content.chars().enumerate() {
        if ch == ' ' {
            cx += char_w;
            continue;
        }
        let class = (x as u64)
            .wrapping_mul(0x9e37_79b9)
            .wrapping_add((y as u64).wrapping_mul(31))
            .wrapping_add(i as u64)
            % 3;
        let (top, height) = match class {
            0 => (0.0, 1.0),
            1 => (0.3, 0.7),
            _ => (0.15, 0.85),
        };
        let bar = Rect::new(cx, y + top * char_h, char_w - 1.0, height * char_h);
        fill_rect(img, &bar, color);
        cx += char_w;
    }
    Rect::new(x, y, (cx - x).max(char_w), char_h)
}

const TEXT_COLOR: Rgb<u8> = Rgb([52, 52, 60]);

fn palette_color(rng: &mut ChaCha20Rng) -> Rgb<u8> {
    let palette = [
        Rgb([66, 133, 244]),
        Rgb([219, 68, 55]),
        Rgb([244, 180, 0]),
        Rgb([15, 157, 88]),
        Rgb([171, 71, 188]),
        Rgb([0, 172, 193]),
        Rgb([255, 112, 67]),
    ];
    palette[rng.gen_range(0..palette.len())]
}

// ---- pattern construction ----

fn text_width(content: &str, char_h: f64) -> f64 {
    let char_w = (char_h * 0.55).max(2.0).round();
    content.chars().count() as f64 * char_w
}

/// Build elements for an icon+caption pair anchored at (x, y).
fn icon_caption_elements(
    rng: &mut ChaCha20Rng,
    vocab: &Vocab,
    grouplike: bool,
    x: f64,
    y: f64,
) -> (Rect, Vec<Element>) {
    let icon = rng.gen_range(14.0..28.0f64).round();
    let char_h = rng.gen_range(8.0..14.0f64).round();
    let content = vocab.draw(rng, grouplike, 1);
    let text_w = text_width(&content, char_h);
    let h = icon.max(char_h);
    let icon_rect = Rect::new(x, y + ((h - icon) / 2.0).round(), icon, icon);
    let text_rect = Rect::new(
        x + icon + 4.0,
        y + ((h - char_h) / 2.0).round(),
        text_w,
        char_h,
    );
    let bbox = icon_rect.union(&text_rect);
    (
        bbox,
        vec![
            Element { kind: ElementKind::Shape, rect: icon_rect, content: None },
            Element { kind: ElementKind::Text, rect: text_rect, content: Some(content) },
        ],
    )
}

fn banner_elements(
    rng: &mut ChaCha20Rng,
    vocab: &Vocab,
    x: f64,
    y: f64,
    max_w: f64,
) -> (Rect, Vec<Element>) {
    let w = rng.gen_range((max_w * 0.6)..max_w).round().max(120.0);
    let h = rng.gen_range(52.0..96.0f64).round();
    let tile = Rect::new(x, y, w, h);
    let pad = rng.gen_range(5.0..9.0f64).round();
    let thumb_side = (h - 2.0 * pad).round();
    let thumb = Rect::new(x + pad, y + pad, thumb_side, thumb_side);
    let mut elements = vec![
        Element { kind: ElementKind::Shape, rect: tile, content: None },
        Element { kind: ElementKind::Shape, rect: thumb, content: None },
    ];
    let n_lines = rng.gen_range(2..=3usize);
    let text_x = thumb.right() + pad;
    let line_h = ((h - 2.0 * pad) / (n_lines as f64 * 1.5)).clamp(7.0, 13.0).round();
    for line in 0..n_lines {
        let n_tokens = rng.gen_range(1..=2usize);
        let content = vocab.draw(rng, true, n_tokens);
        let ty = y + pad + line as f64 * (line_h * 1.5).round();
        let avail = tile.right() - pad - text_x;
        let mut text_w = text_width(&content, line_h);
        let mut text = content;
        while text_w > avail && text.len() > 2 {
            text.pop();
            text_w = text_width(&text, line_h);
        }
        elements.push(Element {
            kind: ElementKind::Text,
            rect: Rect::new(text_x, ty, text_w, line_h),
            content: Some(text),
        });
    }
    (tile, elements)
}

fn draw_elements(img: &mut RgbImage, placement: &Placement, rng: &mut ChaCha20Rng) {
    match placement.tag {
        PlacementTag::Group(Pattern::Banner) => {
            // tile background, then thumbnail, then texts
            let tile = &placement.elements[0];
            fill_rect(img, &tile.rect, Rgb([252, 249, 240]));
            outline_rect(img, &tile.rect, Rgb([214, 205, 184]));
            let thumb = &placement.elements[1];
            draw_icon(img, &thumb.rect, palette_color(rng));
            for e in &placement.elements[2..] {
                if let Some(content) = &e.content {
                    draw_pseudo_text(img, e.rect.x, e.rect.y, e.rect.h, content, TEXT_COLOR);
                }
            }
        }
        _ => {
            for e in &placement.elements {
                match e.kind {
                    ElementKind::Shape => draw_icon(img, &e.rect, palette_color(rng)),
                    ElementKind::Text => {
                        if let Some(content) = &e.content {
                            draw_pseudo_text(img, e.rect.x, e.rect.y, e.rect.h, content, TEXT_COLOR);
                        }
                    }
                }
            }
        }
    }
}

fn rects_compatible(candidate: &Rect, placed: &[Rect]) -> bool {
    placed.iter().all(|r| {
        let iou = crate::cocoeval::iou_xywh(
            [candidate.x, candidate.y, candidate.w, candidate.h],
            [r.x, r.y, r.w, r.h],
        );
        iou <= 0.1 && candidate.intersect(r).map_or(true, |i| i.area() < 0.35 * candidate.area().min(r.area()))
    })
}

fn generate_screen(
    spec: &SynthSpec,
    vocab: &Vocab,
    index: usize,
) -> (ScreenSample, ScreenLog) {
    let mut rng = ChaCha20Rng::seed_from_u64(mix64(spec.seed, "screen", index as u64));
    let width = rng.gen_range(spec.size_range.0..=spec.size_range.1);
    let height = rng.gen_range(spec.size_range.0..=spec.size_range.1);
    let (wf, hf) = (width as f64, height as f64);

    let bg = Rgb([
        rng.gen_range(240..=250u8),
        rng.gen_range(240..=250u8),
        rng.gen_range(242..=252u8),
    ]);
    let mut img = RgbImage::from_pixel(width, height, bg);
    for _ in 0..rng.gen_range(1..=3usize) {
        let y = rng.gen_range(0..height) as f64;
        fill_rect(&mut img, &Rect::new(0.0, y, wf, 1.0), Rgb([226, 226, 230]));
    }

    let mut placements: Vec<Placement> = Vec::new();
    let mut occupied: Vec<Rect> = Vec::new();

    let margin = 6.0;
    let n_groups_target = rng.gen_range(1..=8usize);
    let mut attempts = 0;
    while placements.iter().filter(|p| p.is_group()).count() < n_groups_target && attempts < 200 {
        attempts += 1;
        let pattern = spec.patterns[rng.gen_range(0..spec.patterns.len())];
        match pattern {
            Pattern::IconCaption => {
                let x = rng.gen_range(margin..(wf - 140.0).max(margin + 1.0));
                let y = rng.gen_range(margin..(hf - 40.0).max(margin + 1.0));
                let (bbox, elements) = icon_caption_elements(&mut rng, vocab, true, x.round(), y.round());
                if bbox.right() < wf - margin && bbox.bottom() < hf - margin && rects_compatible(&bbox, &occupied) {
                    occupied.push(bbox);
                    placements.push(Placement { tag: PlacementTag::Group(pattern), rect: bbox, elements });
                }
            }
            Pattern::Banner => {
                let x = rng.gen_range(margin..(wf * 0.25));
                let y = rng.gen_range(margin..(hf - 110.0).max(margin + 1.0));
                let (bbox, elements) =
                    banner_elements(&mut rng, vocab, x.round(), y.round(), wf - 2.0 * margin - x);
                if bbox.right() < wf - margin && bbox.bottom() < hf - margin && rects_compatible(&bbox, &occupied) {
                    occupied.push(bbox);
                    placements.push(Placement { tag: PlacementTag::Group(pattern), rect: bbox, elements });
                }
            }
            Pattern::ListRow => {
                let rows = rng.gen_range(2..=4usize);
                let x = rng.gen_range(margin..(wf - 160.0).max(margin + 1.0)).round();
                let mut y = rng.gen_range(margin..(hf - 140.0).max(margin + 1.0)).round();
                let mut row_placements = Vec::new();
                let mut row_rects = Vec::new();
                let mut ok = true;
                for _ in 0..rows {
                    let (bbox, elements) = icon_caption_elements(&mut rng, vocab, true, x, y);
                    if !(bbox.right() < wf - margin && bbox.bottom() < hf - margin)
                        || !rects_compatible(&bbox, &occupied)
                    {
                        ok = false;
                        break;
                    }
                    row_rects.push(bbox);
                    row_placements.push(Placement {
                        tag: PlacementTag::Group(pattern),
                        rect: bbox,
                        elements,
                    });
                    y = (bbox.bottom() + rng.gen_range(6.0..12.0f64)).round();
                }
                if ok && !row_placements.is_empty() {
                    occupied.extend(row_rects);
                    placements.extend(row_placements);
                }
            }
        }
    }

    let n_groups = placements.iter().filter(|p| p.is_group()).count();
    let n_distractors = (spec.distractor_density * n_groups as f64).round() as usize;
    let mut placed_distractors = 0;
    attempts = 0;
    while placed_distractors < n_distractors && attempts < 300 {
        attempts += 1;
        let roll = rng.gen_range(0..4u32);
        let x = rng.gen_range(margin..(wf - 120.0).max(margin + 1.0)).round();
        let y = rng.gen_range(margin..(hf - 40.0).max(margin + 1.0)).round();
        let (tag, bbox, elements) = match roll {
            // half the distractors are decoy pairs
            0 | 1 => {
                let (bbox, elements) = icon_caption_elements(&mut rng, vocab, false, x, y);
                (PlacementTag::DecoyPair, bbox, elements)
            }
            2 => {
                let side = rng.gen_range(14.0..30.0f64).round();
                let rect = Rect::new(x, y, side, side);
                (
                    PlacementTag::LoneShape,
                    rect,
                    vec![Element { kind: ElementKind::Shape, rect, content: None }],
                )
            }
            _ => {
                let char_h = rng.gen_range(8.0..14.0f64).round();
                let n_tokens = rng.gen_range(1..=2usize);
                let content = vocab.draw(&mut rng, false, n_tokens);
                let text_w = text_width(&content, char_h);
                let rect = Rect::new(x, y, text_w, char_h);
                (
                    PlacementTag::LoneText,
                    rect,
                    vec![Element { kind: ElementKind::Text, rect, content: Some(content) }],
                )
            }
        };
        if bbox.right() < wf - margin && bbox.bottom() < hf - margin && rects_compatible(&bbox, &occupied) {
            occupied.push(bbox);
            placements.push(Placement { tag, rect: bbox, elements });
            placed_distractors += 1;
        }
    }

    for placement in &placements {
        draw_elements(&mut img, placement, &mut rng);
    }

    let sample_id = format!("synth{}-s{index:04}", spec.seed);
    let texts: Vec<TextLayerRecord> = placements
        .iter()
        .flat_map(|p| &p.elements)
        .filter(|e| e.kind == ElementKind::Text)
        .map(|e| TextLayerRecord {
            content: e.content.clone().unwrap_or_default(),
            bbox: NormBox::new(
                (e.rect.x / wf).clamp(0.0, 1.0),
                (e.rect.y / hf).clamp(0.0, 1.0),
                (e.rect.right() / wf).clamp(0.0, 1.0),
                (e.rect.bottom() / hf).clamp(0.0, 1.0),
            ),
        })
        .collect();
    let groups: Vec<GroupLabel> = placements
        .iter()
        .filter(|p| p.is_group())
        .map(|p| GroupLabel::new(p.rect))
        .collect();

    let log = ScreenLog {
        sample_id: sample_id.clone(),
        width,
        height,
        placements,
    };
    let sample = ScreenSample {
        sample_id,
        package_id: format!("synth{}-pkg{:03}", spec.seed, index / SCREENS_PER_PACKAGE),
        width,
        height,
        image: img,
        texts,
        groups,
    };
    (sample, log)
}

/// Generate the corpus together with its placement log.
pub fn generate_corpus_with_log(spec: &SynthSpec) -> Result<(Vec<ScreenSample>, GenLog)> {
    spec.validate()?;
    let vocab = Vocab { words: build_vocab(spec.seed, spec.vocab_size) };
    let mut samples = Vec::with_capacity(spec.n_screens);
    let mut log = GenLog::default();
    for i in 0..spec.n_screens {
        let (sample, screen_log) = generate_screen(spec, &vocab, i);
        samples.push(sample);
        log.screens.push(screen_log);
    }
    Ok((samples, log))
}

pub fn generate_corpus(spec: &SynthSpec) -> Result<Vec<ScreenSample>> {
    generate_corpus_with_log(spec).map(|(samples, _)| samples)
}

/// Dump a corpus as draft documents (one per package) for ingest round-trips.
/// Layer frames are absolute here; serialization makes them parent-relative.
pub fn corpus_to_drafts(samples: &[ScreenSample], log: &GenLog) -> Vec<DesignDraft> {
    assert_eq!(samples.len(), log.screens.len());
    let mut drafts: Vec<DesignDraft> = Vec::new();
    for (sample, screen) in samples.iter().zip(&log.screens) {
        let mut layer_n = 0usize;
        let mut layers = Vec::new();
        for placement in &screen.placements {
            let children: Vec<Layer> = placement
                .elements
                .iter()
                .map(|e| {
                    layer_n += 1;
                    Layer {
                        id: format!("{}-l{layer_n}", sample.sample_id),
                        kind: match e.kind {
                            ElementKind::Shape => LayerKind::Shape,
                            ElementKind::Text => LayerKind::Text,
                        },
                        name: match e.kind {
                            ElementKind::Shape => "shape".to_string(),
                            ElementKind::Text => "text".to_string(),
                        },
                        frame: e.rect,
                        text_content: e.content.clone(),
                        children: Vec::new(),
                    }
                })
                .collect();
            layer_n += 1;
            if placement.is_group() {
                layers.push(Layer {
                    id: format!("{}-l{layer_n}", sample.sample_id),
                    kind: LayerKind::GroupContainer,
                    name: "unit #group#".to_string(),
                    frame: placement.rect,
                    text_content: None,
                    children,
                });
            } else {
                layers.extend(children);
            }
        }
        let artboard = Artboard {
            id: sample.sample_id.clone(),
            name: sample.sample_id.clone(),
            width: sample.width,
            height: sample.height,
            image_ref: format!("images/{}.png", sample.sample_id),
            layers,
        };
        match drafts.iter_mut().find(|d| d.package_id == sample.package_id) {
            Some(draft) => draft.artboards.push(artboard),
            None => drafts.push(DesignDraft {
                package_id: sample.package_id.clone(),
                artboards: vec![artboard],
            }),
        }
    }
    drafts
}
