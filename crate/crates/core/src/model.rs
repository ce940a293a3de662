//! Planar kinematic-tree robot description, the identifiable parameter
//! vector, and forward kinematics.
//!
//! Links are rigid bodies whose local frame has its origin at the revolute
//! joint connecting them to their parent and whose long axis points along
//! local `+y`. Joint angles are counter-clockwise positive. The root link is
//! welded to the world at the origin.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{add2, lift2, rotate2, Scalar, Vec2};

/// Default smoothing velocity of the tanh friction model, rad/s.
pub const DEFAULT_FRICTION_VELOCITY: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkTag {
    FixedFoot,
    LowerBody,
    UpperBody,
    FreeFoot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub name: String,
    pub parent: Option<usize>,
    /// Position of the joint connecting this link, in the parent frame (m).
    pub joint_anchor: [f64; 2],
    /// Distance from the frame origin to the link's distal point along `+y` (m).
    pub length: f64,
    pub nominal_mass: f64,
    /// Centre of mass in the link frame (m).
    pub nominal_com: [f64; 2],
    /// Rotational inertia about the centre of mass (kg m^2).
    pub nominal_inertia: f64,
    pub tag: LinkTag,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointSpec {
    pub name: String,
    pub child_link: usize,
    pub nominal_damping: f64,
    /// Coulomb friction torque magnitude (N m).
    pub nominal_friction: f64,
    pub kp: f64,
    pub kd: f64,
    pub torque_limit: f64,
    pub angle_limits: [f64; 2],
}

fn default_friction_velocity() -> f64 {
    DEFAULT_FRICTION_VELOCITY
}

/// On-disk model description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub links: Vec<LinkSpec>,
    pub joints: Vec<JointSpec>,
    pub gravity: [f64; 2],
    pub dt_sim: f64,
    pub substeps: usize,
    #[serde(default = "default_friction_velocity")]
    pub friction_velocity: f64,
    /// Resting posture used as the excitation baseline; defaults to zero
    /// angles clamped into the joint limits.
    #[serde(default)]
    pub home: Option<Vec<f64>>,
}

/// Validated, immutable robot description.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotModel {
    doc: ModelDocument,
    /// Joint driving each link (`None` for the root).
    link_joint: Vec<Option<usize>>,
}

impl RobotModel {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::build(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// The default planar humanoid shipped with the repository.
    pub fn default_humanoid() -> Self {
        Self::from_json(include_str!("../../../models/planar_humanoid.json"))
            .expect("shipped model is valid")
    }

    pub fn build(doc: ModelDocument) -> Result<Self> {
        let links = &doc.links;
        if links.is_empty() {
            return Err(Error::Topology("model has no links".into()));
        }
        let roots: Vec<usize> = (0..links.len()).filter(|&i| links[i].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::Topology(format!(
                "expected exactly one root link, found {}",
                roots.len()
            )));
        }
        if roots[0] != 0 {
            return Err(Error::Topology("root link must come first".into()));
        }
        for (i, l) in links.iter().enumerate() {
            if let Some(p) = l.parent {
                if p >= i {
                    return Err(Error::Topology(format!(
                        "link '{}' (index {i}) has parent {p}; links must be in topological order",
                        l.name
                    )));
                }
            }
        }
        let fixed: Vec<usize> = (0..links.len())
            .filter(|&i| links[i].tag == LinkTag::FixedFoot)
            .collect();
        if fixed.len() != 1 || fixed[0] != 0 {
            return Err(Error::Topology(format!(
                "exactly one link, the root, must be tagged fixed-foot (found {:?})",
                fixed
            )));
        }
        if !links.iter().any(|l| l.tag == LinkTag::UpperBody) {
            return Err(Error::Topology("no link tagged upper-body".into()));
        }
        let mut names = HashSet::new();
        for l in links {
            if !names.insert(l.name.as_str()) {
                return Err(Error::Value(format!("duplicate link name '{}'", l.name)));
            }
            if !(l.nominal_mass > 0.0) {
                return Err(Error::Value(format!("link '{}' has non-positive mass", l.name)));
            }
            if !(l.nominal_inertia > 0.0) {
                return Err(Error::Value(format!("link '{}' has non-positive inertia", l.name)));
            }
            if !(l.length >= 0.0) {
                return Err(Error::Value(format!("link '{}' has negative length", l.name)));
            }
            let finite = l.joint_anchor.iter().chain(l.nominal_com.iter()).all(|v| v.is_finite());
            if !finite {
                return Err(Error::Value(format!("link '{}' has non-finite geometry", l.name)));
            }
        }

        let mut link_joint = vec![None; links.len()];
        let mut joint_names = HashSet::new();
        for (k, j) in doc.joints.iter().enumerate() {
            if !joint_names.insert(j.name.as_str()) {
                return Err(Error::Value(format!("duplicate joint name '{}'", j.name)));
            }
            if j.child_link == 0 || j.child_link >= links.len() {
                return Err(Error::Topology(format!(
                    "joint '{}' drives invalid link {}",
                    j.name, j.child_link
                )));
            }
            if link_joint[j.child_link].replace(k).is_some() {
                return Err(Error::Topology(format!(
                    "link {} is driven by more than one joint",
                    j.child_link
                )));
            }
            if !(j.kp > 0.0) || !(j.kd >= 0.0) || !(j.torque_limit > 0.0) {
                return Err(Error::Value(format!("joint '{}' has invalid gains or limit", j.name)));
            }
            if !(j.nominal_damping >= 0.0) || !(j.nominal_friction >= 0.0) {
                return Err(Error::Value(format!(
                    "joint '{}' has negative damping or friction",
                    j.name
                )));
            }
            if !(j.angle_limits[0] < j.angle_limits[1]) {
                return Err(Error::Value(format!("joint '{}' has empty angle limits", j.name)));
            }
        }
        if let Some(i) = (1..links.len()).find(|&i| link_joint[i].is_none()) {
            return Err(Error::Topology(format!("link '{}' has no joint", links[i].name)));
        }
        if !(doc.dt_sim > 0.0) || doc.substeps == 0 {
            return Err(Error::Value("dt_sim must be positive and substeps >= 1".into()));
        }
        if !(doc.friction_velocity > 0.0) {
            return Err(Error::Value("friction_velocity must be positive".into()));
        }
        if !doc.gravity.iter().all(|g| g.is_finite()) {
            return Err(Error::Value("gravity must be finite".into()));
        }
        if let Some(home) = &doc.home {
            if home.len() != doc.joints.len() {
                return Err(Error::dim("home posture", doc.joints.len(), home.len()));
            }
            for (j, &h) in doc.joints.iter().zip(home) {
                if !(h >= j.angle_limits[0] && h <= j.angle_limits[1]) {
                    return Err(Error::Value(format!(
                        "home angle {h} of joint '{}' lies outside its limits",
                        j.name
                    )));
                }
            }
        }
        Ok(RobotModel { doc, link_joint })
    }

    pub fn document(&self) -> &ModelDocument {
        &self.doc
    }

    pub fn links(&self) -> &[LinkSpec] {
        &self.doc.links
    }

    pub fn joints(&self) -> &[JointSpec] {
        &self.doc.joints
    }

    pub fn n_links(&self) -> usize {
        self.doc.links.len()
    }

    pub fn n_joints(&self) -> usize {
        self.doc.joints.len()
    }

    pub fn gravity(&self) -> [f64; 2] {
        self.doc.gravity
    }

    pub fn dt_sim(&self) -> f64 {
        self.doc.dt_sim
    }

    pub fn substeps(&self) -> usize {
        self.doc.substeps
    }

    /// Control period: `dt_sim * substeps`.
    pub fn control_dt(&self) -> f64 {
        self.doc.dt_sim * self.doc.substeps as f64
    }

    pub fn friction_velocity(&self) -> f64 {
        self.doc.friction_velocity
    }

    pub fn home(&self) -> Vec<f64> {
        match &self.doc.home {
            Some(h) => h.clone(),
            None => self
                .doc
                .joints
                .iter()
                .map(|j| 0.0f64.clamp(j.angle_limits[0], j.angle_limits[1]))
                .collect(),
        }
    }

    /// Joint driving `link`, `None` for the root.
    pub fn link_joint(&self, link: usize) -> Option<usize> {
        self.link_joint[link]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.doc.links.iter().position(|l| l.name == name)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.doc.joints.iter().position(|j| j.name == name)
    }

    pub fn links_tagged(&self, tag: LinkTag) -> Vec<usize> {
        (0..self.n_links())
            .filter(|&i| self.doc.links[i].tag == tag)
            .collect()
    }

    pub fn upper_body(&self) -> Vec<usize> {
        self.links_tagged(LinkTag::UpperBody)
    }

    pub fn free_foot(&self) -> Option<usize> {
        self.links_tagged(LinkTag::FreeFoot).first().copied()
    }

    /// Links that move (every link except the welded root).
    pub fn movable_links(&self) -> Vec<usize> {
        (1..self.n_links()).collect()
    }

    /// Joints on the path from the root to `link`, root first.
    pub fn joint_path(&self, link: usize) -> Vec<usize> {
        let mut path = Vec::new();
        let mut cur = Some(link);
        while let Some(i) = cur {
            if let Some(k) = self.link_joint[i] {
                path.push(k);
            }
            cur = self.doc.links[i].parent;
        }
        path.reverse();
        path
    }

    /// True if `ancestor` is `link` or lies on its path to the root.
    pub fn is_ancestor_or_self(&self, ancestor: usize, link: usize) -> bool {
        let mut cur = Some(link);
        while let Some(i) = cur {
            if i == ancestor {
                return true;
            }
            if i < ancestor {
                return false;
            }
            cur = self.doc.links[i].parent;
        }
        false
    }

    /// Lower-body joints between the fixed foot and the free foot: the
    /// default decision variables of the foot-height correction.
    pub fn foot_chain_joints(&self) -> Vec<usize> {
        let Some(foot) = self.free_foot() else {
            return Vec::new();
        };
        self.joint_path(foot)
            .into_iter()
            .filter(|&k| {
                matches!(
                    self.doc.links[self.doc.joints[k].child_link].tag,
                    LinkTag::LowerBody | LinkTag::FreeFoot
                )
            })
            .collect()
    }
}

/// Which links and joints carry identifiable parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamLayout {
    pub links: Vec<usize>,
    pub joints: Vec<usize>,
    pub link_names: Vec<String>,
    pub joint_names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamClass {
    Mass,
    Com,
    DampingScale,
    FrictionScale,
}

/// A named entry of the flat parameter vector; indices refer to positions
/// inside the layout's link or joint list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKey {
    Mass(usize),
    ComX(usize),
    ComY(usize),
    Damping(usize),
    Friction(usize),
}

impl ParamLayout {
    pub fn new(model: &RobotModel, links: Vec<usize>, joints: Vec<usize>) -> Result<Self> {
        for &l in &links {
            if l == 0 || l >= model.n_links() {
                return Err(Error::Value(format!("link {l} cannot carry identifiable parameters")));
            }
        }
        for &k in &joints {
            if k >= model.n_joints() {
                return Err(Error::Value(format!("joint {k} out of range")));
            }
        }
        let uniq = |v: &[usize]| v.iter().collect::<HashSet<_>>().len() == v.len();
        if !uniq(&links) || !uniq(&joints) {
            return Err(Error::Value("identifiable sets contain duplicates".into()));
        }
        Ok(ParamLayout {
            link_names: links.iter().map(|&l| model.links()[l].name.clone()).collect(),
            joint_names: joints.iter().map(|&k| model.joints()[k].name.clone()).collect(),
            links,
            joints,
        })
    }

    /// Upper-body links for mass/CoM, every joint for damping/friction.
    pub fn default_for(model: &RobotModel) -> Self {
        Self::new(model, model.upper_body(), (0..model.n_joints()).collect())
            .expect("default layout is valid")
    }

    /// Every movable link and every joint.
    pub fn full(model: &RobotModel) -> Self {
        Self::new(model, model.movable_links(), (0..model.n_joints()).collect())
            .expect("full layout is valid")
    }

    pub fn from_names(model: &RobotModel, links: &[String], joints: &[String]) -> Result<Self> {
        let li = links
            .iter()
            .map(|n| {
                model
                    .link_index(n)
                    .ok_or_else(|| Error::Value(format!("unknown link '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        let ji = joints
            .iter()
            .map(|n| {
                model
                    .joint_index(n)
                    .ok_or_else(|| Error::Value(format!("unknown joint '{n}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(model, li, ji)
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    /// Dimension of the flat vector.
    pub fn dim(&self) -> usize {
        3 * self.links.len() + 2 * self.joints.len()
    }

    /// Flat ordering: masses, then (x, y) CoM pairs, then damping scales,
    /// then friction scales.
    pub fn index(&self, key: ParamKey) -> usize {
        let l = self.links.len();
        let j = self.joints.len();
        match key {
            ParamKey::Mass(i) => i,
            ParamKey::ComX(i) => l + 2 * i,
            ParamKey::ComY(i) => l + 2 * i + 1,
            ParamKey::Damping(k) => 3 * l + k,
            ParamKey::Friction(k) => 3 * l + j + k,
        }
    }

    pub fn key(&self, index: usize) -> ParamKey {
        let l = self.links.len();
        let j = self.joints.len();
        assert!(index < self.dim(), "flat index {index} out of range");
        if index < l {
            ParamKey::Mass(index)
        } else if index < 3 * l {
            let i = (index - l) / 2;
            if (index - l) % 2 == 0 {
                ParamKey::ComX(i)
            } else {
                ParamKey::ComY(i)
            }
        } else if index < 3 * l + j {
            ParamKey::Damping(index - 3 * l)
        } else {
            ParamKey::Friction(index - 3 * l - j)
        }
    }

    pub fn class(&self, index: usize) -> ParamClass {
        match self.key(index) {
            ParamKey::Mass(_) => ParamClass::Mass,
            ParamKey::ComX(_) | ParamKey::ComY(_) => ParamClass::Com,
            ParamKey::Damping(_) => ParamClass::DampingScale,
            ParamKey::Friction(_) => ParamClass::FrictionScale,
        }
    }

    pub fn name(&self, index: usize) -> String {
        match self.key(index) {
            ParamKey::Mass(i) => format!("mass[{}]", self.link_names[i]),
            ParamKey::ComX(i) => format!("com_x[{}]", self.link_names[i]),
            ParamKey::ComY(i) => format!("com_y[{}]", self.link_names[i]),
            ParamKey::Damping(k) => format!("damping[{}]", self.joint_names[k]),
            ParamKey::Friction(k) => format!("friction[{}]", self.joint_names[k]),
        }
    }

    pub fn names(&self) -> Vec<String> {
        (0..self.dim()).map(|i| self.name(i)).collect()
    }

    /// Position of a model link inside the layout's link list.
    pub fn link_slot(&self, link: usize) -> Option<usize> {
        self.links.iter().position(|&l| l == link)
    }

    pub fn joint_slot(&self, joint: usize) -> Option<usize> {
        self.joints.iter().position(|&k| k == joint)
    }

    /// Flat indices of mass and CoM entries for the given model links.
    pub fn mass_com_indices(&self, links: &[usize]) -> Vec<usize> {
        let mut out = Vec::new();
        for &link in links {
            if let Some(s) = self.link_slot(link) {
                out.push(self.index(ParamKey::Mass(s)));
                out.push(self.index(ParamKey::ComX(s)));
                out.push(self.index(ParamKey::ComY(s)));
            }
        }
        out.sort_unstable();
        out
    }
}

/// Identifiable parameters: additive mass/CoM offsets on the layout's links
/// and multiplicative damping/friction scales on its joints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub layout: ParamLayout,
    pub mass_delta: Vec<f64>,
    pub com_delta: Vec<[f64; 2]>,
    pub damping_scale: Vec<f64>,
    pub friction_scale: Vec<f64>,
}

impl ModelParams {
    /// Zero offsets and unit scales.
    pub fn nominal(layout: ParamLayout) -> Self {
        ModelParams {
            mass_delta: vec![0.0; layout.n_links()],
            com_delta: vec![[0.0; 2]; layout.n_links()],
            damping_scale: vec![1.0; layout.n_joints()],
            friction_scale: vec![1.0; layout.n_joints()],
            layout,
        }
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim());
        out.extend_from_slice(&self.mass_delta);
        for c in &self.com_delta {
            out.extend_from_slice(c);
        }
        out.extend_from_slice(&self.damping_scale);
        out.extend_from_slice(&self.friction_scale);
        out
    }

    pub fn unflatten(layout: ParamLayout, flat: &[f64]) -> Result<Self> {
        if flat.len() != layout.dim() {
            return Err(Error::dim("flat parameter vector", layout.dim(), flat.len()));
        }
        let l = layout.n_links();
        let j = layout.n_joints();
        Ok(ModelParams {
            mass_delta: flat[..l].to_vec(),
            com_delta: flat[l..3 * l].chunks(2).map(|c| [c[0], c[1]]).collect(),
            damping_scale: flat[3 * l..3 * l + j].to_vec(),
            friction_scale: flat[3 * l + j..].to_vec(),
            layout,
        })
    }

    pub fn get(&self, key: ParamKey) -> f64 {
        match key {
            ParamKey::Mass(i) => self.mass_delta[i],
            ParamKey::ComX(i) => self.com_delta[i][0],
            ParamKey::ComY(i) => self.com_delta[i][1],
            ParamKey::Damping(k) => self.damping_scale[k],
            ParamKey::Friction(k) => self.friction_scale[k],
        }
    }

    pub fn set(&mut self, key: ParamKey, v: f64) {
        match key {
            ParamKey::Mass(i) => self.mass_delta[i] = v,
            ParamKey::ComX(i) => self.com_delta[i][0] = v,
            ParamKey::ComY(i) => self.com_delta[i][1] = v,
            ParamKey::Damping(k) => self.damping_scale[k] = v,
            ParamKey::Friction(k) => self.friction_scale[k] = v,
        }
    }

    fn check_dims(&self) -> Result<()> {
        let l = self.layout.n_links();
        let j = self.layout.n_joints();
        if self.mass_delta.len() != l {
            return Err(Error::dim("mass_delta", l, self.mass_delta.len()));
        }
        if self.com_delta.len() != l {
            return Err(Error::dim("com_delta", l, self.com_delta.len()));
        }
        if self.damping_scale.len() != j {
            return Err(Error::dim("damping_scale", j, self.damping_scale.len()));
        }
        if self.friction_scale.len() != j {
            return Err(Error::dim("friction_scale", j, self.friction_scale.len()));
        }
        Ok(())
    }

    /// Dimension check plus layout indices valid for `model`.
    pub fn validate(&self, model: &RobotModel) -> Result<()> {
        self.check_dims()?;
        if let Some(&l) = self.layout.links.iter().find(|&&l| l == 0 || l >= model.n_links()) {
            return Err(Error::Value(format!("layout link {l} is not a movable link of the model")));
        }
        if let Some(&j) = self.layout.joints.iter().find(|&&j| j >= model.n_joints()) {
            return Err(Error::Value(format!("layout joint {j} does not exist")));
        }
        Ok(())
    }

    /// Re-expresses these parameters in another layout. Entries the target
    /// layout has but `self` lacks take nominal values.
    pub fn to_layout(&self, layout: &ParamLayout) -> ModelParams {
        let mut out = ModelParams::nominal(layout.clone());
        for (s, &link) in layout.links.iter().enumerate() {
            if let Some(src) = self.layout.link_slot(link) {
                out.mass_delta[s] = self.mass_delta[src];
                out.com_delta[s] = self.com_delta[src];
            }
        }
        for (s, &joint) in layout.joints.iter().enumerate() {
            if let Some(src) = self.layout.joint_slot(joint) {
                out.damping_scale[s] = self.damping_scale[src];
                out.friction_scale[s] = self.friction_scale[src];
            }
        }
        out
    }
}

/// Per-link and per-joint physical values after applying parameters.
/// Generic over the scalar so sensitivities can flow through it.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveModel<'m, T = f64> {
    pub model: &'m RobotModel,
    pub mass: Vec<T>,
    pub com: Vec<Vec2<T>>,
    pub inertia: Vec<f64>,
    pub damping: Vec<T>,
    pub friction: Vec<T>,
}

impl RobotModel {
    pub fn nominal_effective(&self) -> EffectiveModel<'_, f64> {
        EffectiveModel {
            model: self,
            mass: self.links().iter().map(|l| l.nominal_mass).collect(),
            com: self.links().iter().map(|l| l.nominal_com).collect(),
            inertia: self.links().iter().map(|l| l.nominal_inertia).collect(),
            damping: self.joints().iter().map(|j| j.nominal_damping).collect(),
            friction: self.joints().iter().map(|j| j.nominal_friction).collect(),
        }
    }

    pub fn apply_params(&self, params: &ModelParams) -> Result<EffectiveModel<'_, f64>> {
        params.check_dims()?;
        self.apply_values(
            &params.layout,
            &params.mass_delta,
            &params.com_delta,
            &params.damping_scale,
            &params.friction_scale,
        )
    }

    /// Applies parameter values of any scalar type: mass and CoM are nominal
    /// plus offset, damping and friction are nominal times scale.
    pub fn apply_values<T: Scalar>(
        &self,
        layout: &ParamLayout,
        mass_delta: &[T],
        com_delta: &[Vec2<T>],
        damping_scale: &[T],
        friction_scale: &[T],
    ) -> Result<EffectiveModel<'_, T>> {
        for &l in &layout.links {
            if l == 0 || l >= self.n_links() {
                return Err(Error::Value(format!("layout link {l} does not fit this model")));
            }
        }
        if let Some(&k) = layout.joints.iter().find(|&&k| k >= self.n_joints()) {
            return Err(Error::Value(format!("layout joint {k} does not fit this model")));
        }
        let mut mass: Vec<T> = self.links().iter().map(|l| T::constant(l.nominal_mass)).collect();
        let mut com: Vec<Vec2<T>> = self.links().iter().map(|l| lift2(l.nominal_com)).collect();
        let mut damping: Vec<T> =
            self.joints().iter().map(|j| T::constant(j.nominal_damping)).collect();
        let mut friction: Vec<T> =
            self.joints().iter().map(|j| T::constant(j.nominal_friction)).collect();
        for (s, &link) in layout.links.iter().enumerate() {
            let spec = &self.links()[link];
            let m = mass_delta[s] + spec.nominal_mass;
            if !(m.value() > 0.0) {
                return Err(Error::NonPhysical(format!(
                    "effective mass of '{}' is {} kg",
                    spec.name,
                    m.value()
                )));
            }
            mass[link] = m;
            com[link] = [com_delta[s][0] + spec.nominal_com[0], com_delta[s][1] + spec.nominal_com[1]];
        }
        for (s, &joint) in layout.joints.iter().enumerate() {
            let spec = &self.joints()[joint];
            damping[joint] = damping_scale[s] * spec.nominal_damping;
            friction[joint] = friction_scale[s] * spec.nominal_friction;
        }
        Ok(EffectiveModel {
            model: self,
            mass,
            com,
            inertia: self.links().iter().map(|l| l.nominal_inertia).collect(),
            damping,
            friction,
        })
    }
}

/// World-frame poses of every link.
#[derive(Debug, Clone, PartialEq)]
pub struct Kinematics<T = f64> {
    /// Frame origins (joint positions), m.
    pub origins: Vec<Vec2<T>>,
    /// Absolute link orientations, rad.
    pub angles: Vec<T>,
    pub sin: Vec<T>,
    pub cos: Vec<T>,
    /// World centres of mass, m.
    pub coms: Vec<Vec2<T>>,
}

impl<T: Scalar> Kinematics<T> {
    /// World position of the distal point `(0, length)` of `link`.
    pub fn distal(&self, model: &RobotModel, link: usize) -> Vec2<T> {
        let len = T::constant(model.links()[link].length);
        add2(
            self.origins[link],
            rotate2(self.sin[link], self.cos[link], [T::zero(), len]),
        )
    }
}

pub fn forward_kinematics<T: Scalar>(eff: &EffectiveModel<'_, T>, q: &[T]) -> Result<Kinematics<T>> {
    let model = eff.model;
    if q.len() != model.n_joints() {
        return Err(Error::dim("q", model.n_joints(), q.len()));
    }
    Ok(kinematics_unchecked(eff, q))
}

pub(crate) fn kinematics_unchecked<T: Scalar>(eff: &EffectiveModel<'_, T>, q: &[T]) -> Kinematics<T> {
    let model = eff.model;
    let n = model.n_links();
    let mut origins = Vec::with_capacity(n);
    let mut angles = Vec::with_capacity(n);
    let mut sin = Vec::with_capacity(n);
    let mut cos = Vec::with_capacity(n);
    let mut coms = Vec::with_capacity(n);
    for (i, link) in model.links().iter().enumerate() {
        let (origin, angle) = match link.parent {
            None => ([T::zero(), T::zero()], T::zero()),
            Some(p) => {
                let anchor = rotate2(sin[p], cos[p], lift2(link.joint_anchor));
                let k = model.link_joint(i).expect("non-root links have joints");
                (add2(origins[p], anchor), angles[p] + q[k])
            }
        };
        let (s, c) = (angle.sin(), angle.cos());
        coms.push(add2(origin, rotate2(s, c, eff.com[i])));
        origins.push(origin);
        angles.push(angle);
        sin.push(s);
        cos.push(c);
    }
    Kinematics {
        origins,
        angles,
        sin,
        cos,
        coms,
    }
}

/// Joint angles and velocities; the root is welded so every entry belongs to
/// a revolute joint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
}

impl State {
    pub fn at_rest(q: Vec<f64>) -> Self {
        let n = q.len();
        State { q, qdot: vec![0.0; n] }
    }

    pub fn check(&self, n_joints: usize) -> Result<()> {
        if self.q.len() != n_joints {
            return Err(Error::dim("state q", n_joints, self.q.len()));
        }
        if self.qdot.len() != n_joints {
            return Err(Error::dim("state qdot", n_joints, self.qdot.len()));
        }
        if !self.q.iter().chain(self.qdot.iter()).all(|v| v.is_finite()) {
            return Err(Error::Value("state has non-finite entries".into()));
        }
        Ok(())
    }
}
