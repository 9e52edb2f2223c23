//! Line-oriented scene files.
//!
//! ```text
//! # comment
//! [scene]
//! m = 0.1
//! cutoff = 1e-5
//! samples = -4..0
//! step = 1
//!
//! [camera]
//! position = 0 0 -4
//! look_at = 0 0 0        # or: orientation = <9 numbers, row-major>
//! up = 0 1 0
//! focal = 120            # or: fx fy
//! size = 64 64
//!
//! [sphere]               # or [gaussian] with magnitude/center/sigma/albedo
//! center = 0 0 0
//! radius = 0.5
//! albedo = 1 0 0
//!
//! [object]               # rigid mapping; or a single [free] section
//! name = ball
//! members = 0
//! kind = full            # or: position
//! pivot = 0 0 0
//!
//! [pose]
//! values = 0 0 0 0 0 0
//! ```
//!
//! `[energy]` and `[optimizer]` hold the corresponding configuration keys.

use std::fmt::Write as _;

use nalgebra::Matrix3;

use crate::calibration::{build_from_spheres, SphereSpec};
use crate::energy::{ColorSpace, DataTerm, EnergyConfig, PixelWeighting};
use crate::error::{Error, Result};
use crate::imaging::Camera;
use crate::mapping::{Mapping, RigidKind, RigidObject};
use crate::optimizer::{OptimConfig, Preconditioner};
use crate::scene::{Gaussian, Scene, Vec3, DEFAULT_CUTOFF};
use crate::visibility::SampleScheme;

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    Gaussians(Vec<Gaussian>),
    Spheres(Vec<SphereSpec>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneFile {
    pub smoothness: f64,
    pub cutoff: f64,
    pub samples: SampleScheme,
    pub cameras: Vec<Camera>,
    pub geometry: Geometry,
    pub mapping: Option<Mapping>,
    pub pose: Option<Vec<f64>>,
    pub energy: EnergyConfig,
    pub optimizer: OptimConfig,
}

impl Default for SceneFile {
    fn default() -> Self {
        Self {
            smoothness: 0.1,
            cutoff: DEFAULT_CUTOFF,
            samples: SampleScheme::default(),
            cameras: Vec::new(),
            geometry: Geometry::Gaussians(Vec::new()),
            mapping: None,
            pose: None,
            energy: EnergyConfig::default(),
            optimizer: OptimConfig::default(),
        }
    }
}

impl SceneFile {
    /// The scene described by the geometry sections (spheres are calibrated
    /// at the file's smoothness level).
    pub fn build_scene(&self) -> Result<Scene> {
        let mut scene = match &self.geometry {
            Geometry::Gaussians(g) => {
                let mut s = Scene::new(g.clone());
                s.smoothness = self.smoothness;
                s
            }
            Geometry::Spheres(s) => build_from_spheres(s, self.smoothness, &self.samples)?,
        };
        scene.cutoff = self.cutoff;
        scene.validate()?;
        Ok(scene)
    }

    pub fn camera(&self, index: usize) -> Result<&Camera> {
        self.cameras.get(index).ok_or_else(|| {
            Error::InvalidParameter(format!(
                "camera {index} requested, file defines {}",
                self.cameras.len()
            ))
        })
    }
}

struct Entry {
    key: String,
    value: String,
    line: usize,
    col: usize,
    used: bool,
}

struct Section {
    name: String,
    line: usize,
    entries: Vec<Entry>,
}

impl Section {
    fn take(&mut self, key: &str) -> Option<&mut Entry> {
        let e = self.entries.iter_mut().find(|e| e.key == key)?;
        e.used = true;
        Some(e)
    }

    fn require(&mut self, key: &str) -> Result<&mut Entry> {
        let (name, line) = (self.name.clone(), self.line);
        self.take(key).ok_or_else(|| Error::Parse {
            line,
            column: 1,
            message: format!("[{name}] is missing `{key}`"),
        })
    }

    fn finish(&self) -> Result<()> {
        match self.entries.iter().find(|e| !e.used) {
            Some(e) => Err(Error::Parse {
                line: e.line,
                column: 1,
                message: format!("unknown key `{}` in [{}]", e.key, self.name),
            }),
            None => Ok(()),
        }
    }
}

impl Entry {
    fn err(&self, offset: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            column: self.col + offset,
            message: message.into(),
        }
    }

    /// Tokens with their column offsets.
    fn tokens(&self) -> Vec<(usize, &str)> {
        let mut out = Vec::new();
        let mut start = None;
        for (i, ch) in self.value.char_indices() {
            if ch.is_whitespace() || ch == ',' {
                if let Some(s) = start.take() {
                    out.push((s, &self.value[s..i]));
                }
            } else if start.is_none() {
                start = Some(i);
            }
        }
        if let Some(s) = start {
            out.push((s, &self.value[s..]));
        }
        out
    }

    fn floats(&self, n: Option<usize>) -> Result<Vec<f64>> {
        let toks = self.tokens();
        if let Some(n) = n {
            if toks.len() != n {
                return Err(self.err(0, format!("`{}` needs {n} numbers, got {}", self.key, toks.len())));
            }
        }
        toks.iter()
            .map(|(o, t)| {
                t.parse::<f64>()
                    .map_err(|_| self.err(*o, format!("`{t}` is not a number")))
            })
            .collect()
    }

    fn float(&self) -> Result<f64> {
        Ok(self.floats(Some(1))?[0])
    }

    fn vec3(&self) -> Result<Vec3> {
        let v = self.floats(Some(3))?;
        Ok(Vec3::new(v[0], v[1], v[2]))
    }

    fn usize(&self) -> Result<usize> {
        self.value
            .trim()
            .parse()
            .map_err(|_| self.err(0, format!("`{}` is not a nonnegative integer", self.value)))
    }

    fn u64(&self) -> Result<u64> {
        self.value
            .trim()
            .parse()
            .map_err(|_| self.err(0, format!("`{}` is not a nonnegative integer", self.value)))
    }

    fn boolean(&self) -> Result<bool> {
        match self.value.trim() {
            "true" | "yes" | "on" => Ok(true),
            "false" | "no" | "off" => Ok(false),
            v => Err(self.err(0, format!("`{v}` is not a boolean"))),
        }
    }

    fn word(&self, options: &[&str]) -> Result<String> {
        let v = self.value.trim();
        if options.contains(&v) {
            Ok(v.to_string())
        } else {
            Err(self.err(0, format!("`{v}` is not one of {}", options.join(", "))))
        }
    }

    fn indices(&self) -> Result<Vec<usize>> {
        let mut out = Vec::new();
        for (o, t) in self.tokens() {
            let bad = || self.err(o, format!("`{t}` is not an index or range"));
            if let Some((a, b)) = t.split_once("..") {
                let a: usize = a.parse().map_err(|_| bad())?;
                let b: usize = b.parse().map_err(|_| bad())?;
                if a > b {
                    return Err(bad());
                }
                out.extend(a..=b);
            } else {
                out.push(t.parse().map_err(|_| bad())?);
            }
        }
        Ok(out)
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let trimmed = content.trim();
        if trimmed.is_empty() {
            continue;
        }
        let indent = content.len() - content.trim_start().len();
        if let Some(rest) = trimmed.strip_prefix('[') {
            let name = rest.strip_suffix(']').ok_or(Error::Parse {
                line,
                column: indent + 1,
                message: "unterminated section header".into(),
            })?;
            sections.push(Section {
                name: name.trim().to_string(),
                line,
                entries: Vec::new(),
            });
            continue;
        }
        let Some(eq) = content.find('=') else {
            return Err(Error::Parse {
                line,
                column: indent + 1,
                message: "expected `key = value` or `[section]`".into(),
            });
        };
        let key = content[..eq].trim().to_string();
        if key.is_empty() {
            return Err(Error::Parse {
                line,
                column: indent + 1,
                message: "empty key".into(),
            });
        }
        let after = &content[eq + 1..];
        let lead = after.len() - after.trim_start().len();
        let Some(section) = sections.last_mut() else {
            return Err(Error::Parse {
                line,
                column: indent + 1,
                message: "entry before any [section]".into(),
            });
        };
        if section.entries.iter().any(|e| e.key == key) {
            return Err(Error::Parse {
                line,
                column: indent + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
        section.entries.push(Entry {
            key,
            value: after.trim().to_string(),
            line,
            col: eq + 2 + lead,
            used: false,
        });
    }
    Ok(sections)
}

fn parse_camera(s: &mut Section, index: usize) -> Result<Camera> {
    let field = |f: &str| format!("camera[{index}].{f}");
    let position = s.require("position")?.vec3()?;
    let size = s.require("size")?.floats(Some(2))?;
    if size.iter().any(|v| *v < 1.0 || v.fract() != 0.0) {
        return Err(Error::field(field("size"), "width and height must be positive integers"));
    }
    let (width, height) = (size[0] as usize, size[1] as usize);
    let focal = s.require("focal")?.floats(None)?;
    let (fx, fy) = match focal.as_slice() {
        [f] => (*f, *f),
        [a, b] => (*a, *b),
        _ => return Err(Error::field(field("focal"), "expects one or two numbers")),
    };
    let (cx, cy) = match s.take("principal") {
        Some(e) => {
            let p = e.floats(Some(2))?;
            (p[0], p[1])
        }
        None => (width as f64 / 2.0, height as f64 / 2.0),
    };
    let orientation = match (s.take("orientation").map(|e| e.floats(Some(9))), s.take("look_at").map(|e| e.vec3())) {
        (Some(_), Some(_)) => {
            return Err(Error::field(field("orientation"), "give either orientation or look_at"))
        }
        (Some(m), None) => Matrix3::from_row_slice(&m?),
        (None, Some(target)) => {
            let up = match s.take("up") {
                Some(e) => e.vec3()?,
                None => Vec3::y(),
            };
            Camera::look_at(position, target?, up, fx, width, height)
                .map_err(|e| Error::field(field("look_at"), e.to_string()))?
                .orientation
        }
        (None, None) => Matrix3::identity(),
    };
    Camera::new(position, orientation, fx, fy, cx, cy, width, height).map_err(|e| match e {
        Error::Field { field: f, message } => Error::field(format!("camera[{index}].{}", f.trim_start_matches("camera.")), message),
        other => other,
    })
}

/// Parses a scene file.
pub fn parse_scene(text: &str) -> Result<SceneFile> {
    let mut file = SceneFile::default();
    let mut gaussians = Vec::new();
    let mut spheres = Vec::new();
    let mut objects = Vec::new();
    let mut free = None;
    let mut seen = std::collections::HashSet::new();

    for mut s in split_sections(text)? {
        let single = matches!(s.name.as_str(), "scene" | "energy" | "optimizer" | "free" | "pose");
        if single && !seen.insert(s.name.clone()) {
            return Err(Error::Parse {
                line: s.line,
                column: 1,
                message: format!("section [{}] appears twice", s.name),
            });
        }
        match s.name.as_str() {
            "scene" => {
                if let Some(e) = s.take("m") {
                    file.smoothness = e.float()?;
                }
                if let Some(e) = s.take("cutoff") {
                    file.cutoff = e.float()?;
                }
                if let Some(e) = s.take("samples") {
                    file.samples.offsets =
                        SampleScheme::parse_offsets(&e.value).map_err(|err| e.err(0, err.to_string()))?;
                }
                if let Some(e) = s.take("step") {
                    file.samples.step = e.float()?;
                }
            }
            "camera" => {
                let cam = parse_camera(&mut s, file.cameras.len())?;
                file.cameras.push(cam);
            }
            "gaussian" => {
                let g = Gaussian::new(
                    s.require("magnitude")?.float()?,
                    s.require("center")?.vec3()?,
                    s.require("sigma")?.float()?,
                    match s.take("albedo") {
                        Some(e) => e.vec3()?,
                        None => Vec3::repeat(1.0),
                    },
                );
                let i = gaussians.len();
                g.validate().map_err(|e| match e {
                    Error::Field { field, message } => Error::field(format!("gaussian[{i}].{field}"), message),
                    other => other,
                })?;
                gaussians.push(g);
            }
            "sphere" => {
                let sp = SphereSpec::new(
                    s.require("center")?.vec3()?,
                    s.require("radius")?.float()?,
                    match s.take("albedo") {
                        Some(e) => e.vec3()?,
                        None => Vec3::repeat(1.0),
                    },
                );
                let i = spheres.len();
                if !(sp.radius > 0.0) || !sp.radius.is_finite() {
                    return Err(Error::field(format!("sphere[{i}].radius"), format!("must be positive, got {}", sp.radius)));
                }
                if !sp.albedo.iter().all(|a| (0.0..=1.0).contains(a)) {
                    return Err(Error::field(format!("sphere[{i}].albedo"), "channels must lie in [0, 1]"));
                }
                spheres.push(sp);
            }
            "object" => {
                let i = objects.len();
                let name = match s.take("name") {
                    Some(e) => e.value.clone(),
                    None => format!("object{i}"),
                };
                let members = s.require("members")?.indices()?;
                let kind = match s.take("kind") {
                    Some(e) => match e.word(&["full", "position"])?.as_str() {
                        "full" => RigidKind::Full,
                        _ => RigidKind::Position,
                    },
                    None => RigidKind::Full,
                };
                let pivot = match s.take("pivot") {
                    Some(e) => e.vec3()?,
                    None => Vec3::zeros(),
                };
                objects.push(RigidObject {
                    name,
                    members,
                    pivot,
                    kind,
                });
            }
            "free" => {
                free = Some(match s.take("coupled") {
                    Some(e) => e.boolean()?,
                    None => false,
                });
            }
            "pose" => {
                file.pose = Some(s.require("values")?.floats(None)?);
            }
            "energy" => parse_energy(&mut s, &mut file.energy)?,
            "optimizer" => parse_optimizer(&mut s, &mut file.optimizer)?,
            other => {
                return Err(Error::Parse {
                    line: s.line,
                    column: 2,
                    message: format!("unknown section [{other}]"),
                })
            }
        }
        s.finish()?;
    }

    if !gaussians.is_empty() && !spheres.is_empty() {
        return Err(Error::field("geometry", "use either [gaussian] or [sphere] sections, not both"));
    }
    if !(file.smoothness > 0.0 && file.smoothness < 1.0) {
        return Err(Error::field("scene.m", "must lie in (0, 1)"));
    }
    if !(file.cutoff >= 0.0) {
        return Err(Error::field("scene.cutoff", "must be nonnegative"));
    }
    file.samples.validate()?;
    file.energy.samples = file.samples.clone();
    file.energy.validate()?;
    file.optimizer.validate()?;
    let count = gaussians.len().max(spheres.len());
    file.geometry = if spheres.is_empty() {
        Geometry::Gaussians(gaussians)
    } else {
        Geometry::Spheres(spheres)
    };
    file.mapping = match (objects.is_empty(), free) {
        (false, Some(_)) => return Err(Error::field("mapping", "use either [object] or [free], not both")),
        (false, None) => Some(Mapping::Rigid(objects)),
        (true, Some(coupled)) => Some(Mapping::Free { coupled }),
        (true, None) => None,
    };
    if let Some(m) = &file.mapping {
        let placeholder = Scene::new(vec![
            Gaussian::new(1.0, Vec3::zeros(), 1.0, Vec3::zeros());
            count
        ]);
        m.validate(&placeholder)?;
        if let Some(p) = &file.pose {
            if p.len() != m.arity(&placeholder) {
                return Err(Error::field(
                    "pose.values",
                    format!("{} values for a mapping with {} parameters", p.len(), m.arity(&placeholder)),
                ));
            }
        }
    }
    Ok(file)
}

fn parse_energy(s: &mut Section, e: &mut EnergyConfig) -> Result<()> {
    if let Some(v) = s.take("term") {
        e.term = if v.word(&["pc", "mc"])? == "pc" { DataTerm::Pc } else { DataTerm::Mc };
    }
    if let Some(v) = s.take("color_space") {
        e.color_space = if v.word(&["rgb", "hsv"])? == "rgb" {
            ColorSpace::LinearRgb
        } else {
            ColorSpace::HsvScaled
        };
    }
    if let Some(v) = s.take("value_scale") {
        e.value_scale = v.float()?;
    }
    if let Some(v) = s.take("weighting") {
        e.weighting = if v.word(&["uniform", "per-pixel"])? == "uniform" {
            PixelWeighting::Uniform
        } else {
            PixelWeighting::PerPixel
        };
    }
    if let Some(v) = s.take("exclude_far") {
        e.exclude_far = match v.word(&["auto", "true", "false"])?.as_str() {
            "auto" => None,
            "true" => Some(true),
            _ => Some(false),
        };
    }
    if let Some(v) = s.take("accel_weight") {
        e.accel_weight = v.float()?;
    }
    if let Some(v) = s.take("limit_weight") {
        e.limit_weight = v.float()?;
    }
    if let Some(v) = s.take("limits") {
        let mut limits = Vec::new();
        for (o, t) in v.tokens() {
            let bad = || v.err(o, format!("`{t}` is not lo:hi"));
            let (lo, hi) = t.split_once(':').ok_or_else(bad)?;
            limits.push((lo.parse().map_err(|_| bad())?, hi.parse().map_err(|_| bad())?));
        }
        e.limits = Some(limits);
    }
    Ok(())
}

fn parse_optimizer(s: &mut Section, o: &mut OptimConfig) -> Result<()> {
    if let Some(v) = s.take("max_iterations") {
        o.max_iterations = v.usize()?;
    }
    if let Some(v) = s.take("grad_tol") {
        o.grad_tol = v.float()?;
    }
    if let Some(v) = s.take("rel_tol") {
        o.rel_tol = v.float()?;
    }
    if let Some(v) = s.take("initial_step") {
        o.initial_step = v.float()?;
    }
    if let Some(v) = s.take("max_step") {
        o.max_step = v.float()?;
    }
    if let Some(v) = s.take("max_displacement") {
        o.max_displacement = v.float()?;
    }
    if let Some(v) = s.take("armijo") {
        o.armijo = v.float()?;
    }
    if let Some(v) = s.take("backtrack") {
        o.backtrack = v.float()?;
    }
    if let Some(v) = s.take("max_backtracks") {
        o.max_backtracks = v.usize()?;
    }
    if let Some(v) = s.take("restart") {
        o.restart_interval = if v.value.trim() == "auto" { None } else { Some(v.usize()?) };
    }
    if let Some(v) = s.take("preconditioner") {
        o.preconditioner = if v.word(&["none", "diagonal"])? == "none" {
            Preconditioner::None
        } else {
            Preconditioner::Diagonal
        };
    }
    if let Some(v) = s.take("decay") {
        o.decay = v.float()?;
    }
    if let Some(v) = s.take("precond_floor") {
        o.precond_floor = v.float()?;
    }
    if let Some(v) = s.take("snapshot_every") {
        o.snapshot_every = v.usize()?;
    }
    if let Some(v) = s.take("seed") {
        o.seed = v.u64()?;
    }
    Ok(())
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

fn v3(v: &Vec3) -> String {
    join(v.as_slice())
}

/// Writes `file` in the format read by [`parse_scene`]. Numbers use the
/// shortest representation that reads back to the same value.
pub fn serialize_scene(file: &SceneFile) -> String {
    let mut s = String::new();
    let samples = file
        .samples
        .offsets
        .iter()
        .map(|k| k.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let _ = writeln!(
        s,
        "[scene]\nm = {}\ncutoff = {}\nsamples = {samples}\nstep = {}\n",
        file.smoothness, file.cutoff, file.samples.step
    );
    for c in &file.cameras {
        let o: Vec<f64> = (0..3).flat_map(|r| (0..3).map(move |k| (r, k))).map(|(r, k)| c.orientation[(r, k)]).collect();
        let _ = writeln!(
            s,
            "[camera]\nposition = {}\norientation = {}\nfocal = {} {}\nprincipal = {} {}\nsize = {} {}\n",
            v3(&c.position),
            join(&o),
            c.fx,
            c.fy,
            c.cx,
            c.cy,
            c.width,
            c.height
        );
    }
    match &file.geometry {
        Geometry::Gaussians(gs) => {
            for g in gs {
                let _ = writeln!(
                    s,
                    "[gaussian]\nmagnitude = {}\ncenter = {}\nsigma = {}\nalbedo = {}\n",
                    g.magnitude,
                    v3(&g.center),
                    g.sigma,
                    v3(&g.albedo)
                );
            }
        }
        Geometry::Spheres(ss) => {
            for sp in ss {
                let _ = writeln!(
                    s,
                    "[sphere]\ncenter = {}\nradius = {}\nalbedo = {}\n",
                    v3(&sp.center),
                    sp.radius,
                    v3(&sp.albedo)
                );
            }
        }
    }
    match &file.mapping {
        Some(Mapping::Rigid(objects)) => {
            for o in objects {
                let members = o.members.iter().map(|m| m.to_string()).collect::<Vec<_>>().join(" ");
                let kind = match o.kind {
                    RigidKind::Full => "full",
                    RigidKind::Position => "position",
                };
                let _ = writeln!(
                    s,
                    "[object]\nname = {}\nmembers = {members}\nkind = {kind}\npivot = {}\n",
                    o.name,
                    v3(&o.pivot)
                );
            }
        }
        Some(Mapping::Free { coupled }) => {
            let _ = writeln!(s, "[free]\ncoupled = {coupled}\n");
        }
        None => {}
    }
    if let Some(p) = &file.pose {
        let _ = writeln!(s, "[pose]\nvalues = {}\n", join(p));
    }
    let e = &file.energy;
    let _ = writeln!(
        s,
        "[energy]\nterm = {}\ncolor_space = {}\nvalue_scale = {}\nweighting = {}\nexclude_far = {}\naccel_weight = {}\nlimit_weight = {}",
        match e.term {
            DataTerm::Pc => "pc",
            DataTerm::Mc => "mc",
        },
        match e.color_space {
            ColorSpace::LinearRgb => "rgb",
            ColorSpace::HsvScaled => "hsv",
        },
        e.value_scale,
        match e.weighting {
            PixelWeighting::Uniform => "uniform",
            PixelWeighting::PerPixel => "per-pixel",
        },
        match e.exclude_far {
            None => "auto",
            Some(true) => "true",
            Some(false) => "false",
        },
        e.accel_weight,
        e.limit_weight
    );
    if let Some(l) = &e.limits {
        let _ = writeln!(
            s,
            "limits = {}",
            l.iter().map(|(a, b)| format!("{a}:{b}")).collect::<Vec<_>>().join(" ")
        );
    }
    let o = &file.optimizer;
    let _ = writeln!(
        s,
        "\n[optimizer]\nmax_iterations = {}\ngrad_tol = {}\nrel_tol = {}\ninitial_step = {}\nmax_step = {}\nmax_displacement = {}\narmijo = {}\nbacktrack = {}\nmax_backtracks = {}\nrestart = {}\npreconditioner = {}\ndecay = {}\nprecond_floor = {}\nsnapshot_every = {}\nseed = {}",
        o.max_iterations,
        o.grad_tol,
        o.rel_tol,
        o.initial_step,
        o.max_step,
        o.max_displacement,
        o.armijo,
        o.backtrack,
        o.max_backtracks,
        o.restart_interval.map_or("auto".to_string(), |r| r.to_string()),
        match o.preconditioner {
            Preconditioner::None => "none",
            Preconditioner::Diagonal => "diagonal",
        },
        o.decay,
        o.precond_floor,
        o.snapshot_every,
        o.seed
    );
    s
}
