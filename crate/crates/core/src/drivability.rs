//! Drivability selection: query composition, the oracle interface standing in
//! for a vision-language model, response parsing, mask selection, the rubric
//! and IoU evaluation.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::LazyLock;

use base64::Engine as _;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::Mask;
use crate::render::{self, Canvas};
use crate::segmentation::AnnotatedFrame;
use crate::world::{ClassSet, SensorPatch, TerrainClass};

/// Pixels per patch cell in rendered query images.
pub const QUERY_SCALE: u32 = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VisualFormat {
    #[default]
    Collage,
    Annotated,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cardinality {
    /// Exactly one index.
    Snp,
    /// Any number of indices.
    #[default]
    Mnp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptStyle {
    Specific,
    General,
    #[default]
    FullContext,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptSpec {
    pub visual_format: VisualFormat,
    pub cardinality: Cardinality,
    pub style: PromptStyle,
    pub drivable_classes: Vec<TerrainClass>,
}

impl Default for PromptSpec {
    fn default() -> Self {
        PromptSpec {
            visual_format: VisualFormat::Collage,
            cardinality: Cardinality::Mnp,
            style: PromptStyle::FullContext,
            drivable_classes: ClassSet::default_drivable().iter().collect(),
        }
    }
}

#[derive(Deserialize)]
struct Templates {
    intro: IntroTemplates,
    full_context: PairTemplates,
    general: PairTemplates,
    specific: PairTemplates,
}

#[derive(Deserialize)]
struct IntroTemplates {
    collage: String,
    annotated: String,
}

#[derive(Deserialize)]
struct PairTemplates {
    snp: String,
    mnp: String,
}

static TEMPLATES: LazyLock<Templates> = LazyLock::new(|| {
    toml::from_str(include_str!("../fixtures/prompts.toml"))
        .expect("bundled prompt templates parse")
});

/// The raw template fixture, for adapters that render prompts themselves.
pub fn prompt_templates_toml() -> &'static str {
    include_str!("../fixtures/prompts.toml")
}

fn prose_list(classes: &[TerrainClass]) -> String {
    let words: Vec<String> = classes.iter().map(|c| c.prose()).collect();
    match words.as_slice() {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

impl PromptSpec {
    pub fn validate(&self) -> Result<()> {
        if self.drivable_classes.is_empty() {
            return Err(Error::Config(
                "prompt needs at least one drivable class".into(),
            ));
        }
        Ok(())
    }

    pub fn class_set(&self) -> ClassSet {
        self.drivable_classes.iter().copied().collect()
    }

    /// Prompt text; a pure function of the spec.
    pub fn render_text(&self) -> Result<String> {
        self.validate()?;
        let t = &*TEMPLATES;
        let pair = match self.style {
            PromptStyle::FullContext => &t.full_context,
            PromptStyle::General => &t.general,
            PromptStyle::Specific => &t.specific,
        };
        let template = match self.cardinality {
            Cardinality::Snp => &pair.snp,
            Cardinality::Mnp => &pair.mnp,
        };
        let intro = match self.visual_format {
            VisualFormat::Collage => &t.intro.collage,
            VisualFormat::Annotated => &t.intro.annotated,
        };
        let questions = self
            .drivable_classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                format!(
                    "{} mask number is the {} path",
                    if i == 0 { "Which" } else { "which" },
                    c.prose()
                )
            })
            .collect::<Vec<_>>()
            .join(" and ");
        Ok(template
            .replace("{intro}", intro)
            .replace("{classes}", &prose_list(&self.drivable_classes))
            .replace("{class}", &self.drivable_classes[0].prose())
            .replace("{questions}", &questions))
    }
}

/// Composed oracle input.
#[derive(Clone, Debug)]
pub struct DrivabilityQuery<'a> {
    pub image_payload: Canvas,
    pub prompt_text: String,
    pub frame: &'a AnnotatedFrame,
    pub cardinality: Cardinality,
}

/// Collage `[original | annotated]` or the annotated image alone, plus the
/// prompt text for `spec`.
pub fn render_query<'a>(
    frame: &'a AnnotatedFrame,
    original: &SensorPatch,
    spec: &PromptSpec,
) -> Result<DrivabilityQuery<'a>> {
    let annotated = render::annotated_image(frame, original, QUERY_SCALE)?;
    let image_payload = match spec.visual_format {
        VisualFormat::Collage => {
            render::hconcat(&render::patch_image(original, QUERY_SCALE), &annotated)
        }
        VisualFormat::Annotated => annotated,
    };
    Ok(DrivabilityQuery {
        image_payload,
        prompt_text: spec.render_text()?,
        frame,
        cardinality: spec.cardinality,
    })
}

/// Parsed oracle output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleResponse {
    pub raw_text: String,
    /// Deduplicated 1-based indices, in response order.
    pub indices: Vec<usize>,
}

/// Canonical text for an index list (`"3, 5, 7"`).
pub fn format_indices(indices: &[usize]) -> String {
    indices
        .iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

/// Extracts maximal decimal integer tokens, keeping in-range first occurrences.
/// Under SNP only the first valid index survives.
pub fn parse_response(
    raw: &str,
    frame: &AnnotatedFrame,
    cardinality: Cardinality,
) -> Result<OracleResponse> {
    let n = frame.len();
    let mut indices = Vec::new();
    for token in raw
        .split(|c: char| !c.is_ascii_digit())
        .filter(|t| !t.is_empty())
    {
        let Ok(i) = token.parse::<usize>() else {
            continue;
        };
        if (1..=n).contains(&i) && !indices.contains(&i) {
            indices.push(i);
        }
    }
    if cardinality == Cardinality::Snp {
        indices.truncate(1);
    }
    if indices.is_empty() {
        return Err(Error::NoDrivableSelection);
    }
    Ok(OracleResponse {
        raw_text: raw.to_string(),
        indices,
    })
}

/// Most frequent class under `mask`; ties go to the lower class byte.
pub fn majority_class(mask: &Mask, patch: &SensorPatch) -> Option<TerrainClass> {
    let mut counts = [0usize; TerrainClass::ALL.len()];
    for (x, y) in mask.pixels() {
        counts[patch.class_at(x, y) as usize] += 1;
    }
    let (best, &n) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))?;
    (n > 0).then(|| TerrainClass::ALL[best])
}

/// Indices whose majority class is drivable (MNP), or the largest such mask
/// (SNP; ties to the lower index).
pub fn ground_truth_indices(
    frame: &AnnotatedFrame,
    patch: &SensorPatch,
    drivable: ClassSet,
    cardinality: Cardinality,
) -> Vec<usize> {
    let all: Vec<usize> = frame
        .masks
        .iter()
        .filter(|m| majority_class(&m.mask, patch).is_some_and(|c| drivable.contains(c)))
        .map(|m| m.index)
        .collect();
    match cardinality {
        Cardinality::Mnp => all,
        Cardinality::Snp => largest(frame, &all).into_iter().collect(),
    }
}

fn largest(frame: &AnnotatedFrame, indices: &[usize]) -> Option<usize> {
    indices.iter().copied().max_by(|&a, &b| {
        let area = |i| frame.get(i).map_or(0, |m| m.mask.area());
        area(a).cmp(&area(b)).then(b.cmp(&a))
    })
}

/// Perfect-oracle answer; never fails, may be empty.
pub fn ground_truth_oracle(
    query: &DrivabilityQuery,
    patch: &SensorPatch,
    drivable: ClassSet,
) -> OracleResponse {
    let indices = ground_truth_indices(query.frame, patch, drivable, query.cardinality);
    OracleResponse {
        raw_text: format_indices(&indices),
        indices,
    }
}

/// Which non-drivable masks may be falsely reported.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FalsePositiveScope {
    #[default]
    All,
    /// Only masks touching a hazard cell.
    Hazard,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub p_fp: f64,
    pub p_fn: f64,
    pub seed: u64,
    #[serde(default)]
    pub fp_scope: FalsePositiveScope,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_fp", self.p_fp), ("p_fn", self.p_fn)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Uniform draw keyed by `(seed, frame, index, stream)`. Reusing the same key
/// across noise levels couples them, so raising `p_fn` only removes indices.
fn keyed_uniform(seed: u64, frame_id: u64, index: usize, stream: u64) -> f64 {
    let key = seed
        ^ frame_id.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (index as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ stream.wrapping_mul(0x1656_67B1_9E37_79F9);
    ChaCha8Rng::seed_from_u64(key).random::<f64>()
}

/// Ground truth perturbed by independent per-mask false positives and
/// negatives. `fp_eligible` restricts false positives when the scope is
/// [`FalsePositiveScope::Hazard`].
pub fn noisy_oracle(
    query: &DrivabilityQuery,
    patch: &SensorPatch,
    drivable: ClassSet,
    noise: &NoiseParams,
    hazard: Option<&Mask>,
) -> OracleResponse {
    let frame = query.frame;
    let truth = ground_truth_indices(frame, patch, drivable, Cardinality::Mnp);
    let fid = frame.source.frame_id;
    let mut picked: Vec<usize> = truth
        .iter()
        .copied()
        .filter(|&i| noise.p_fn == 0.0 || keyed_uniform(noise.seed, fid, i, 1) >= noise.p_fn)
        .collect();
    for m in &frame.masks {
        if truth.contains(&m.index) {
            continue;
        }
        let eligible = match noise.fp_scope {
            FalsePositiveScope::All => true,
            FalsePositiveScope::Hazard => {
                hazard.is_some_and(|h| h.intersection_area(&m.mask).is_ok_and(|n| n > 0))
            }
        };
        if eligible && noise.p_fp > 0.0 && keyed_uniform(noise.seed, fid, m.index, 2) < noise.p_fp {
            picked.push(m.index);
        }
    }
    picked.sort_unstable();
    if query.cardinality == Cardinality::Snp {
        picked = largest(frame, &picked).into_iter().collect();
    }
    OracleResponse {
        raw_text: format_indices(&picked),
        indices: picked,
    }
}

/// Everything an oracle may look at for one query.
pub struct OracleContext<'a> {
    pub query: &'a DrivabilityQuery<'a>,
    pub patch: &'a SensorPatch,
    pub drivable: ClassSet,
    /// Patch-space hazard cells, when the world has any.
    pub hazard: Option<&'a Mask>,
}

/// Stand-in for a vision-language model: returns free text that
/// [`parse_response`] turns into indices.
pub trait Oracle: Send {
    fn name(&self) -> &str;
    fn respond(&mut self, ctx: &OracleContext) -> Result<String>;
}

pub struct GroundTruthOracle;

impl Oracle for GroundTruthOracle {
    fn name(&self) -> &str {
        "gt"
    }

    fn respond(&mut self, ctx: &OracleContext) -> Result<String> {
        Ok(ground_truth_oracle(ctx.query, ctx.patch, ctx.drivable).raw_text)
    }
}

pub struct NoisyOracle(pub NoiseParams);

impl Oracle for NoisyOracle {
    fn name(&self) -> &str {
        "noisy"
    }

    fn respond(&mut self, ctx: &OracleContext) -> Result<String> {
        Ok(noisy_oracle(ctx.query, ctx.patch, ctx.drivable, &self.0, ctx.hazard).raw_text)
    }
}

/// Lists every index; the rubric scores this 0.
pub struct AllIndicesOracle;

impl Oracle for AllIndicesOracle {
    fn name(&self) -> &str {
        "all"
    }

    fn respond(&mut self, ctx: &OracleContext) -> Result<String> {
        Ok(format_indices(
            &ctx.query.frame.indices().collect::<Vec<_>>(),
        ))
    }
}

/// Replies with fixed text; useful for parser and contingency tests.
pub struct FixedOracle(pub String);

impl Oracle for FixedOracle {
    fn name(&self) -> &str {
        "fixed"
    }

    fn respond(&mut self, _ctx: &OracleContext) -> Result<String> {
        Ok(self.0.clone())
    }
}

/// Request body of the external oracle wire format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleRequest {
    pub frame_id: u64,
    pub prompt_text: String,
    pub image_b64: String,
    pub indices_available: Vec<usize>,
}

impl OracleRequest {
    pub fn from_query(query: &DrivabilityQuery) -> Result<OracleRequest> {
        Ok(OracleRequest {
            frame_id: query.frame.source.frame_id,
            prompt_text: query.prompt_text.clone(),
            image_b64: base64::engine::general_purpose::STANDARD
                .encode(query.image_payload.png_bytes()?),
            indices_available: query.frame.indices().collect(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleReply {
    pub raw_text: String,
}

enum Transport {
    Stdio {
        child: Child,
        stdin: ChildStdin,
        stdout: BufReader<ChildStdout>,
    },
    Http {
        url: String,
        client: reqwest::blocking::Client,
    },
}

/// Out-of-process oracle speaking line-delimited JSON over a child's stdio, or
/// JSON over HTTP `POST /oracle`.
pub struct ExternalOracle {
    transport: Transport,
}

impl ExternalOracle {
    /// Spawns `program args…`; one request line in, one reply line out.
    pub fn spawn(program: &str, args: &[String]) -> Result<ExternalOracle> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()?;
        let stdin = child
            .stdin
            .take()
            .ok_or_else(|| Error::Oracle("child stdin unavailable".into()))?;
        let stdout = BufReader::new(
            child
                .stdout
                .take()
                .ok_or_else(|| Error::Oracle("child stdout unavailable".into()))?,
        );
        Ok(ExternalOracle {
            transport: Transport::Stdio {
                child,
                stdin,
                stdout,
            },
        })
    }

    /// Posts to `base_url` (with `/oracle` appended when missing).
    pub fn http(base_url: &str) -> Result<ExternalOracle> {
        let trimmed = base_url.trim_end_matches('/');
        let url = if trimmed.ends_with("/oracle") {
            trimmed.to_string()
        } else {
            format!("{trimmed}/oracle")
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(60))
            .build()
            .map_err(|e| Error::Oracle(e.to_string()))?;
        Ok(ExternalOracle {
            transport: Transport::Http { url, client },
        })
    }

    pub fn exchange(&mut self, request: &OracleRequest) -> Result<OracleReply> {
        match &mut self.transport {
            Transport::Stdio { stdin, stdout, .. } => {
                let mut line = serde_json::to_string(request)?;
                line.push('\n');
                stdin.write_all(line.as_bytes())?;
                stdin.flush()?;
                let mut reply = String::new();
                if stdout.read_line(&mut reply)? == 0 {
                    return Err(Error::Oracle("external oracle closed its output".into()));
                }
                Ok(serde_json::from_str(reply.trim())?)
            }
            Transport::Http { url, client } => client
                .post(url.as_str())
                .json(request)
                .send()
                .and_then(|r| r.error_for_status())
                .and_then(|r| r.json::<OracleReply>())
                .map_err(|e| Error::Oracle(e.to_string())),
        }
    }
}

impl Drop for ExternalOracle {
    fn drop(&mut self) {
        if let Transport::Stdio { child, .. } = &mut self.transport {
            let _ = child.kill();
            let _ = child.wait();
        }
    }
}

impl Oracle for ExternalOracle {
    fn name(&self) -> &str {
        "extern"
    }

    fn respond(&mut self, ctx: &OracleContext) -> Result<String> {
        Ok(self
            .exchange(&OracleRequest::from_query(ctx.query)?)?
            .raw_text)
    }
}

/// Outcome of a query through the contingency chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainOutcome {
    pub response: OracleResponse,
    /// Oracle calls made (1 or 2).
    pub calls: usize,
    pub used_fallback: bool,
}

/// Queries `primary`; on [`Error::NoDrivableSelection`] retries once with
/// `fallback` when one is configured.
pub fn query_with_contingency(
    primary: &mut dyn Oracle,
    fallback: Option<&mut (dyn Oracle + 'static)>,
    ctx: &OracleContext,
) -> (Result<ChainOutcome>, usize) {
    let frame = ctx.query.frame;
    let card = ctx.query.cardinality;
    let first = primary
        .respond(ctx)
        .and_then(|raw| parse_response(&raw, frame, card));
    match (first, fallback) {
        (Ok(response), _) => (
            Ok(ChainOutcome {
                response,
                calls: 1,
                used_fallback: false,
            }),
            1,
        ),
        (Err(Error::NoDrivableSelection), Some(fb)) => {
            let second = fb
                .respond(ctx)
                .and_then(|raw| parse_response(&raw, frame, card));
            (
                second.map(|response| ChainOutcome {
                    response,
                    calls: 2,
                    used_fallback: true,
                }),
                2,
            )
        }
        (Err(e), _) => (Err(e), 1),
    }
}

/// Binary drivable area assembled from selected masks.
#[derive(Clone, Debug, PartialEq)]
pub struct DrivabilityMask {
    pub bitmap: Mask,
    pub source_indices: Vec<usize>,
}

/// Pixelwise OR of the selected masks.
pub fn select_masks(frame: &AnnotatedFrame, indices: &[usize]) -> DrivabilityMask {
    DrivabilityMask {
        bitmap: frame.union_of(indices),
        source_indices: indices.to_vec(),
    }
}

/// Ground-truth drivable pixels: drivable-class cells covered by any mask.
pub fn class_truth_mask(frame: &AnnotatedFrame, patch: &SensorPatch, drivable: ClassSet) -> Mask {
    let covered = frame.union_of(&frame.indices().collect::<Vec<_>>());
    let (w, h) = frame.dims();
    Mask::from_fn(w, h, |x, y| {
        covered.get(x, y) && drivable.contains(patch.class_at(x, y))
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "f64", try_from = "f64")]
pub enum RubricScore {
    Zero,
    Half,
    One,
}

impl RubricScore {
    pub fn value(self) -> f64 {
        match self {
            RubricScore::Zero => 0.0,
            RubricScore::Half => 0.5,
            RubricScore::One => 1.0,
        }
    }
}

impl From<RubricScore> for f64 {
    fn from(s: RubricScore) -> f64 {
        s.value()
    }
}

impl TryFrom<f64> for RubricScore {
    type Error = String;

    fn try_from(v: f64) -> Result<RubricScore, String> {
        match v {
            0.0 => Ok(RubricScore::Zero),
            0.5 => Ok(RubricScore::Half),
            1.0 => Ok(RubricScore::One),
            _ => Err(format!("rubric score {v} is not 0, 0.5 or 1")),
        }
    }
}

/// Rubric over selection `S` and ground-truth drivable set `D`:
/// 0 if `S` lists every index while some mask is not drivable, or misses `D`
/// entirely; 1 if `S ⊆ D` and covers
/// `D` exactly or at least `coverage_threshold` of its pixels; 0.5 if `S`
/// covers enough of `D` but also contains non-drivable masks; 0 otherwise.
pub fn score_selection(
    frame: &AnnotatedFrame,
    selected: &[usize],
    truth: &[usize],
    coverage_threshold: f64,
) -> RubricScore {
    let all: Vec<usize> = frame.indices().collect();
    let mut s: Vec<usize> = selected.to_vec();
    s.sort_unstable();
    s.dedup();
    let mut d: Vec<usize> = truth.to_vec();
    d.sort_unstable();
    d.dedup();
    let hit: Vec<usize> = s.iter().copied().filter(|i| d.contains(i)).collect();
    if (s == all && d != all) || hit.is_empty() {
        return RubricScore::Zero;
    }
    let truth_area = frame.union_of(&d).area();
    let sufficient =
        hit == d || frame.union_of(&hit).area() as f64 >= coverage_threshold * truth_area as f64;
    let extra = s.len() > hit.len();
    match (sufficient, extra) {
        (true, false) => RubricScore::One,
        (true, true) => RubricScore::Half,
        _ => RubricScore::Zero,
    }
}

/// Standard IoU; `1.0` when both are empty.
pub fn iou_eval(predicted: &Mask, truth: &Mask) -> Result<f64> {
    if predicted.dims() != truth.dims() {
        return Err(Error::DimensionMismatch {
            expected: truth.dims(),
            actual: predicted.dims(),
        });
    }
    if predicted.is_empty() && truth.is_empty() {
        return Ok(1.0);
    }
    predicted.iou(truth)
}

/// Mean IoU over frames whose truth is nonempty; `None` if there are none.
pub fn mean_iou(pairs: &[(Mask, Mask)]) -> Result<Option<f64>> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (p, t) in pairs {
        if t.is_empty() {
            continue;
        }
        sum += iou_eval(p, t)?;
        n += 1;
    }
    Ok((n > 0).then(|| sum / n as f64))
}
