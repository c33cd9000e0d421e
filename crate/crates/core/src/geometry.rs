//! Materials and 2D cross-section geometry for fin capacitors.
//!
//! Coordinates are SI meters with `y` pointing up, away from the substrate.
//! A [`CrossSection`] is a stack of rectangular dielectric regions painted
//! over a background material, plus perfectly conducting electrodes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A linear isotropic dielectric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub name: String,
    pub rel_permittivity: f64,
    #[serde(default)]
    pub loss_tangent: f64,
}

impl Material {
    pub fn new(name: impl Into<String>, rel_permittivity: f64) -> Self {
        Material {
            name: name.into(),
            rel_permittivity,
            loss_tangent: 0.0,
        }
    }

    pub fn with_loss_tangent(mut self, tan_delta: f64) -> Self {
        self.loss_tangent = tan_delta;
        self
    }

    pub fn vacuum() -> Self {
        Material::new("vacuum", 1.0)
    }

    /// Silicon at low temperature, eps_r = 11.7.
    pub fn silicon() -> Self {
        Material::new("silicon", 11.7)
    }

    /// LPCVD silicon nitride hard mask, eps_r = 7.0.
    pub fn silicon_nitride() -> Self {
        Material::new("silicon_nitride", 7.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_permittivity.is_finite() && self.rel_permittivity >= 1.0) {
            return Err(Error::Geometry(format!(
                "material '{}' has eps_r = {} (must be >= 1)",
                self.name, self.rel_permittivity
            )));
        }
        if !(self.loss_tangent.is_finite() && self.loss_tangent >= 0.0) {
            return Err(Error::Geometry(format!(
                "material '{}' has negative or non-finite loss tangent",
                self.name
            )));
        }
        Ok(())
    }
}

/// Axis-aligned rectangle in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Rect { x0, y0, x1, y1 }
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    /// Closed containment: points on the boundary are inside.
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.contains_with_margin(x, y, 0.0)
    }

    /// Containment in the rectangle grown by `margin` on every side.
    pub fn contains_with_margin(&self, x: f64, y: f64, margin: f64) -> bool {
        x >= self.x0 - margin && x <= self.x1 + margin && y >= self.y0 - margin && y <= self.y1 + margin
    }

    pub fn is_valid(&self) -> bool {
        [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite()) && self.x0 < self.x1 && self.y0 < self.y1
    }

    pub fn within(&self, outer: &Rect) -> bool {
        self.x0 >= outer.x0 && self.x1 <= outer.x1 && self.y0 >= outer.y0 && self.y1 <= outer.y1
    }

    pub fn strictly_within(&self, outer: &Rect) -> bool {
        self.x0 > outer.x0 && self.x1 < outer.x1 && self.y0 > outer.y0 && self.y1 < outer.y1
    }

    /// True when the two rectangles share a region of positive area.
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.x0 < other.x1 && other.x0 < self.x1 && self.y0 < other.y1 && other.y0 < self.y1
    }

    pub fn mirrored_x(&self) -> Rect {
        Rect::new(-self.x1, self.y0, -self.x0, self.y1)
    }
}

/// A dielectric rectangle. Later regions override earlier ones.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    pub rect: Rect,
    pub material: Material,
    /// Name used for participation bookkeeping; defaults to the material name.
    pub tag: Option<String>,
}

impl Region {
    pub fn new(rect: Rect, material: Material) -> Self {
        Region {
            rect,
            material,
            tag: None,
        }
    }

    pub fn tagged(mut self, tag: impl Into<String>) -> Self {
        self.tag = Some(tag.into());
        self
    }

    pub fn tag(&self) -> &str {
        self.tag.as_deref().unwrap_or(&self.material.name)
    }
}

/// A perfect conductor held at a fixed potential. It may be built from
/// several rectangles (e.g. a sidewall film plus its contact pad).
#[derive(Debug, Clone, PartialEq)]
pub struct Electrode {
    pub label: String,
    pub potential: f64,
    pub rects: Vec<Rect>,
}

impl Electrode {
    pub fn new(label: impl Into<String>, potential: f64, rects: Vec<Rect>) -> Self {
        Electrode {
            label: label.into(),
            potential,
            rects,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        self.rects.iter().any(|r| r.contains(x, y))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub bbox: Rect,
    pub background: Material,
    pub regions: Vec<Region>,
    pub electrodes: Vec<Electrode>,
    /// Width of the thinnest dielectric gap that the grid must resolve.
    pub resolve_feature: Option<f64>,
}

impl CrossSection {
    pub fn new(bbox: Rect, background: Material) -> Self {
        CrossSection {
            bbox,
            background,
            regions: Vec::new(),
            electrodes: Vec::new(),
            resolve_feature: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.bbox.is_valid() {
            return Err(Error::Geometry("degenerate bounding box".into()));
        }
        self.background.validate()?;
        for (i, r) in self.regions.iter().enumerate() {
            r.material.validate()?;
            if !r.rect.is_valid() {
                return Err(Error::Geometry(format!("region {i} is degenerate")));
            }
            if !r.rect.within(&self.bbox) {
                return Err(Error::Geometry(format!(
                    "region {i} ('{}') leaves the bounding box",
                    r.tag()
                )));
            }
        }
        for (i, e) in self.electrodes.iter().enumerate() {
            if !e.potential.is_finite() {
                return Err(Error::Geometry(format!(
                    "electrode '{}' has a non-finite potential",
                    e.label
                )));
            }
            if e.rects.is_empty() {
                return Err(Error::Geometry(format!("electrode '{}' has no rectangles", e.label)));
            }
            for r in &e.rects {
                if !r.is_valid() {
                    return Err(Error::Geometry(format!(
                        "electrode '{}' has a degenerate rectangle",
                        e.label
                    )));
                }
                if !r.within(&self.bbox) {
                    return Err(Error::Geometry(format!(
                        "electrode '{}' leaves the bounding box",
                        e.label
                    )));
                }
            }
            for other in &self.electrodes[i + 1..] {
                if other.label == e.label {
                    return Err(Error::Geometry(format!("duplicate electrode label '{}'", e.label)));
                }
                let touching = e.rects.iter().any(|a| other.rects.iter().any(|b| a.overlaps(b)));
                if touching {
                    return Err(Error::Geometry(format!(
                        "electrodes '{}' and '{}' overlap",
                        e.label, other.label
                    )));
                }
            }
        }
        if let Some(f) = self.resolve_feature {
            if !(f.is_finite() && f > 0.0) {
                return Err(Error::Geometry("resolve_feature must be positive".into()));
            }
        }
        Ok(())
    }

    /// Material at a point: the last region containing it, else background.
    pub fn material_at(&self, x: f64, y: f64) -> &Material {
        match self.region_index_at(x, y) {
            Some(i) => &self.regions[i].material,
            None => &self.background,
        }
    }

    pub fn region_index_at(&self, x: f64, y: f64) -> Option<usize> {
        self.regions.iter().rposition(|r| r.rect.contains(x, y))
    }

    pub fn electrode_index_at(&self, x: f64, y: f64) -> Option<usize> {
        self.electrode_index_near(x, y, 0.0)
    }

    /// Like [`electrode_index_at`](Self::electrode_index_at) with electrode
    /// rectangles grown by `margin`, for sample points that sit on an edge.
    pub fn electrode_index_near(&self, x: f64, y: f64, margin: f64) -> Option<usize> {
        self.electrodes
            .iter()
            .position(|e| e.rects.iter().any(|r| r.contains_with_margin(x, y, margin)))
    }

    pub fn electrode(&self, label: &str) -> Option<&Electrode> {
        self.electrodes.iter().find(|e| e.label == label)
    }

    /// Two facing plates of height `height` separated by `gap`, filled with a
    /// dielectric, in a box closed at the plate edges so there is no fringing.
    pub fn parallel_plate(gap: f64, height: f64, dielectric: Material, plate_thickness: f64) -> Result<Self> {
        if !(gap > 0.0 && height > 0.0 && plate_thickness > 0.0) {
            return Err(Error::Geometry("parallel plate dimensions must be positive".into()));
        }
        let half = gap / 2.0;
        let bbox = Rect::new(-half - plate_thickness, 0.0, half + plate_thickness, height);
        let mut cs = CrossSection::new(bbox, dielectric);
        cs.electrodes = vec![
            Electrode::new("L", -0.5, vec![Rect::new(-half - plate_thickness, 0.0, -half, height)]),
            Electrode::new("R", 0.5, vec![Rect::new(half, 0.0, half + plate_thickness, height)]),
        ];
        cs.resolve_feature = Some(gap);
        cs.validate()?;
        Ok(cs)
    }
}

/// Dielectric cap left on top of the fin by the self-aligned flow.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NitrideCap {
    pub thickness: f64,
    pub rel_permittivity: f64,
}

impl Default for NitrideCap {
    fn default() -> Self {
        NitrideCap {
            thickness: 100e-9,
            rel_permittivity: 7.0,
        }
    }
}

/// Dimensions of a metallized fin capacitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinGeometry {
    /// Fin width between the two metallized sidewalls.
    pub thickness: f64,
    pub height: f64,
    /// Capacitor length along the fin (out of the cross-section plane).
    pub length: f64,
    pub metal_thickness: f64,
    /// Fraction of the fin height covered by metal, measured from the base.
    pub sidewall_coverage: f64,
    pub nitride_cap: Option<NitrideCap>,
    /// Height of the substrate shoulders beyond the pads; 0 means the pads
    /// sit on a flat substrate surface.
    pub trench_depth: f64,
    /// Lateral extent of each contact pad on the trench floor.
    pub pad_width: f64,
}

impl FinGeometry {
    pub fn new(thickness: f64, height: f64) -> Self {
        FinGeometry {
            thickness,
            height,
            length: 100e-6,
            metal_thickness: 30e-9,
            sidewall_coverage: 1.0,
            nitride_cap: Some(NitrideCap::default()),
            trench_depth: 0.0,
            pad_width: 2e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.thickness) {
            return Err(Error::Geometry("fin thickness must be positive".into()));
        }
        if !(self.height.is_finite() && self.height > self.thickness) {
            return Err(Error::Geometry(format!(
                "fin height {:e} m must exceed its thickness {:e} m",
                self.height, self.thickness
            )));
        }
        if !pos(self.length) {
            return Err(Error::Geometry("fin length must be positive".into()));
        }
        if !pos(self.metal_thickness) {
            return Err(Error::Geometry("metal thickness must be positive".into()));
        }
        if !(self.sidewall_coverage > 0.0 && self.sidewall_coverage <= 1.0) {
            return Err(Error::Geometry(format!(
                "sidewall coverage {} outside (0, 1]",
                self.sidewall_coverage
            )));
        }
        if !(self.trench_depth.is_finite() && self.trench_depth >= 0.0) {
            return Err(Error::Geometry("trench depth must be >= 0".into()));
        }
        if !(self.pad_width.is_finite() && self.pad_width >= 0.0) {
            return Err(Error::Geometry("pad width must be >= 0".into()));
        }
        if let Some(cap) = &self.nitride_cap {
            if !pos(cap.thickness) || !(cap.rel_permittivity >= 1.0) {
                return Err(Error::Geometry("invalid nitride cap".into()));
            }
        }
        Ok(())
    }
}

/// Builds the cross-section of a fin with metal films on both sidewalls.
///
/// Layout: substrate below `y = 0`, the barrier fin centred on `x = 0` and
/// rising to `y = height`, electrode `L` (-0.5 V) on the left sidewall and
/// `R` (+0.5 V) on the right, each continuing onto the trench floor as a
/// pad, the optional nitride cap on top, and the background (vacuum)
/// elsewhere. The box extends `padding_factor * height` beyond the fin.
pub fn build_fin_cross_section(
    fin: &FinGeometry,
    substrate: &Material,
    barrier: &Material,
    padding_factor: f64,
) -> Result<CrossSection> {
    fin.validate()?;
    substrate.validate()?;
    barrier.validate()?;
    if !(padding_factor.is_finite() && padding_factor >= 3.0) {
        return Err(Error::Precondition(format!(
            "padding factor {padding_factor} must be >= 3"
        )));
    }
    let t = fin.thickness;
    let h = fin.height;
    let m = fin.metal_thickness;
    let pad = fin.pad_width;
    let half = t / 2.0;
    let margin = padding_factor * h;
    if m + pad >= margin / 2.0 {
        return Err(Error::Geometry(format!(
            "metal ({m:e} m) plus pad ({pad:e} m) reaches half-way to the boundary"
        )));
    }

    let cap_top = h + fin.nitride_cap.map_or(0.0, |c| c.thickness);
    let bbox = Rect::new(-half - margin, -margin, half + margin, cap_top + margin);
    let mut cs = CrossSection::new(bbox, Material::vacuum());

    cs.regions
        .push(Region::new(Rect::new(bbox.x0, bbox.y0, bbox.x1, 0.0), substrate.clone()).tagged("substrate"));
    cs.regions
        .push(Region::new(Rect::new(-half, 0.0, half, h), barrier.clone()).tagged("fin"));
    if fin.trench_depth > 0.0 {
        let edge = half + m + pad;
        cs.regions
            .push(Region::new(Rect::new(edge, 0.0, bbox.x1, fin.trench_depth), substrate.clone()).tagged("substrate"));
        cs.regions
            .push(Region::new(Rect::new(bbox.x0, 0.0, -edge, fin.trench_depth), substrate.clone()).tagged("substrate"));
    }
    if let Some(cap) = &fin.nitride_cap {
        let nitride = Material::new("silicon_nitride", cap.rel_permittivity);
        cs.regions
            .push(Region::new(Rect::new(-half, h, half, cap_top), nitride).tagged("nitride_cap"));
    }

    let covered = fin.sidewall_coverage * h;
    let right = {
        let mut rects = vec![Rect::new(half, 0.0, half + m, covered)];
        if pad > 0.0 {
            rects.push(Rect::new(half + m, 0.0, half + m + pad, m));
        }
        rects
    };
    let left: Vec<Rect> = right.iter().map(Rect::mirrored_x).collect();
    cs.electrodes.push(Electrode::new("L", -0.5, left));
    cs.electrodes.push(Electrode::new("R", 0.5, right));
    cs.resolve_feature = Some(t);
    cs.validate()?;
    Ok(cs)
}

// ---------------------------------------------------------------------------
// Text format
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CrossSectionFile {
    background: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resolve_feature_m: Option<f64>,
    bbox_m: [f64; 4],
    materials: Vec<Material>,
    #[serde(default)]
    regions: Vec<RegionFile>,
    electrodes: Vec<ElectrodeFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RegionFile {
    material: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tag: Option<String>,
    rect_m: [f64; 4],
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ElectrodeFile {
    label: String,
    potential_v: f64,
    rects_m: Vec<[f64; 4]>,
}

fn rect_from(a: [f64; 4]) -> Rect {
    Rect::new(a[0], a[1], a[2], a[3])
}

fn rect_to(r: &Rect) -> [f64; 4] {
    [r.x0, r.y0, r.x1, r.y1]
}

impl CrossSection {
    /// Serializes to the TOML cross-section format. Rectangles are written
    /// as `[x0, y0, x1, y1]` in meters, potentials in volts.
    pub fn to_toml(&self) -> String {
        let mut materials: Vec<Material> = vec![self.background.clone()];
        for r in &self.regions {
            if !materials.iter().any(|m| m.name == r.material.name) {
                materials.push(r.material.clone());
            }
        }
        let file = CrossSectionFile {
            background: self.background.name.clone(),
            resolve_feature_m: self.resolve_feature,
            bbox_m: rect_to(&self.bbox),
            materials,
            regions: self
                .regions
                .iter()
                .map(|r| RegionFile {
                    material: r.material.name.clone(),
                    tag: r.tag.clone(),
                    rect_m: rect_to(&r.rect),
                })
                .collect(),
            electrodes: self
                .electrodes
                .iter()
                .map(|e| ElectrodeFile {
                    label: e.label.clone(),
                    potential_v: e.potential,
                    rects_m: e.rects.iter().map(rect_to).collect(),
                })
                .collect(),
        };
        toml::to_string(&file).expect("cross-section is always representable as TOML")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let file: CrossSectionFile = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        let lookup = |name: &str| -> Result<Material> {
            file.materials
                .iter()
                .find(|m| m.name == name)
                .cloned()
                .ok_or_else(|| Error::Format(format!("unknown material '{name}'")))
        };
        let mut cs = CrossSection::new(rect_from(file.bbox_m), lookup(&file.background)?);
        for r in &file.regions {
            cs.regions.push(Region {
                rect: rect_from(r.rect_m),
                material: lookup(&r.material)?,
                tag: r.tag.clone(),
            });
        }
        for e in &file.electrodes {
            cs.electrodes.push(Electrode::new(
                e.label.clone(),
                e.potential_v,
                e.rects_m.iter().copied().map(rect_from).collect(),
            ));
        }
        cs.resolve_feature = file.resolve_feature_m;
        cs.validate()?;
        Ok(cs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fin219() -> CrossSection {
        let fin = FinGeometry::new(219e-9, 3.55e-6);
        build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 5.0).unwrap()
    }

    #[test]
    fn electrodes_face_each_other_across_the_fin() {
        let cs = fin219();
        let l = cs.electrode("L").unwrap();
        let r = cs.electrode("R").unwrap();
        let gap = r.rects[0].x0 - l.rects[0].x1;
        assert!((gap - 219e-9).abs() < 1e-18);
        assert_eq!(cs.material_at(0.0, 1e-6).rel_permittivity, 11.7);
        assert_eq!(cs.material_at(0.0, 10e-6).rel_permittivity, 1.0);
    }

    #[test]
    fn thickness_not_below_height_is_rejected() {
        let fin = FinGeometry::new(1.0, 2.0 * 0.5);
        let err = build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 5.0);
        assert!(matches!(err, Err(Error::Geometry(_))));
        let mut fin = FinGeometry::new(1.0, 2.0);
        fin.thickness = 2.0;
        assert!(build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 5.0).is_err());
    }

    #[test]
    fn padding_sets_box_extent() {
        let cs = fin219();
        assert!(cs.bbox.x1 - 219e-9 / 2.0 >= 17.75e-6 - 1e-15);
        assert!(-cs.bbox.x0 - 219e-9 / 2.0 >= 17.75e-6 - 1e-15);
        assert!(-cs.bbox.y0 >= 17.75e-6 - 1e-15);
    }

    #[test]
    fn coverage_outside_unit_interval_is_rejected() {
        for cov in [0.0, -0.1, 1.01] {
            let mut fin = FinGeometry::new(219e-9, 3.55e-6);
            fin.sidewall_coverage = cov;
            assert!(build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 5.0).is_err());
        }
    }

    #[test]
    fn oversized_pads_are_rejected() {
        let mut fin = FinGeometry::new(219e-9, 3.55e-6);
        fin.pad_width = 6e-6;
        assert!(build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 3.0).is_err());
    }

    #[test]
    fn padding_below_three_is_rejected() {
        let fin = FinGeometry::new(219e-9, 3.55e-6);
        assert!(matches!(
            build_fin_cross_section(&fin, &Material::silicon(), &Material::silicon(), 2.5),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn later_regions_win() {
        let mut cs = CrossSection::new(Rect::new(0.0, 0.0, 1.0, 1.0), Material::vacuum());
        cs.regions
            .push(Region::new(Rect::new(0.0, 0.0, 1.0, 1.0), Material::new("a", 2.0)));
        cs.regions
            .push(Region::new(Rect::new(0.0, 0.0, 0.5, 0.5), Material::new("b", 3.0)));
        assert_eq!(cs.material_at(0.25, 0.25).name, "b");
        assert_eq!(cs.material_at(0.75, 0.75).name, "a");
    }

    #[test]
    fn overlapping_electrodes_are_rejected() {
        let mut cs = CrossSection::new(Rect::new(0.0, 0.0, 1.0, 1.0), Material::vacuum());
        cs.electrodes
            .push(Electrode::new("a", 0.0, vec![Rect::new(0.1, 0.1, 0.5, 0.5)]));
        cs.electrodes
            .push(Electrode::new("b", 1.0, vec![Rect::new(0.4, 0.4, 0.6, 0.6)]));
        assert!(cs.validate().is_err());
    }

    #[test]
    fn toml_round_trip() {
        let cs = fin219();
        let text = cs.to_toml();
        let back = CrossSection::from_toml(&text).unwrap();
        assert_eq!(back, cs);
    }

    #[test]
    fn unknown_keys_in_file_are_rejected() {
        let text = fin219().to_toml().replacen("background", "backgrund", 1);
        assert!(CrossSection::from_toml(&text).is_err());
    }
}
