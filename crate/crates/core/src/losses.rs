//! Training losses: frequency, reconstruction, adversarial, feature
//! matching and perceptual terms, and their weighted sum.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::expand_channels;
use crate::nn::Conv2d;
use crate::tensor::{Graph, ParamStore, Real, Tensor, Var};

pub const PERCEPTUAL_SEED: u64 = 0x5eed_f00d;
pub const PERCEPTUAL_LABEL: &str = "perceptual";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    /// Weight of the frequency term; 1 in the full model, 0 to ablate it.
    pub frequency: Real,
    pub rec: Real,
    pub adv: Real,
    pub fm: Real,
    pub perceptual: Real,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            frequency: 1.0,
            rec: 10.0,
            adv: 10.0,
            fm: 100.0,
            perceptual: 30.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let all = [self.frequency, self.rec, self.adv, self.fm, self.perceptual];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(format!("loss weights must be finite and ≥ 0, got {self:?}")));
        }
        Ok(())
    }
}

/// The five generator-side terms of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub fre: Real,
    pub rec: Real,
    pub adv_g: Real,
    pub fm: Real,
    pub perc: Real,
}

impl LossTerms {
    pub fn total(&self, w: &LossWeights) -> Real {
        w.frequency * self.fre + w.rec * self.rec + w.adv * self.adv_g + w.fm * self.fm + w.perceptual * self.perc
    }
}

/// Per-step log record.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub step: u64,
    pub fre: Real,
    pub rec: Real,
    pub adv_d: Real,
    pub adv_g: Real,
    pub fm: Real,
    pub perc: Real,
    pub total: Real,
}

impl LossReport {
    pub const CSV_HEADER: &'static str = "step,fre,rec,adv_d,adv_g,fm,perc,total";

    pub fn new(step: u64, terms: LossTerms, adv_d: Real, weights: &LossWeights) -> Self {
        Self {
            step,
            fre: terms.fre,
            rec: terms.rec,
            adv_d,
            adv_g: terms.adv_g,
            fm: terms.fm,
            perc: terms.perc,
            total: terms.total(weights),
        }
    }

    pub fn terms(&self) -> LossTerms {
        LossTerms {
            fre: self.fre,
            rec: self.rec,
            adv_g: self.adv_g,
            fm: self.fm,
            perc: self.perc,
        }
    }

    pub fn is_finite(&self) -> bool {
        [self.fre, self.rec, self.adv_d, self.adv_g, self.fm, self.perc, self.total]
            .iter()
            .all(|v| v.is_finite())
    }

    /// Shortest round-trip formatting, so identical runs give identical bytes.
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{:?},{:?},{:?}",
            self.step, self.fre, self.rec, self.adv_d, self.adv_g, self.fm, self.perc, self.total
        )
    }

    pub fn from_csv_row(line: &str) -> Result<Self> {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 8 {
            return Err(Error::config(format!("loss row needs 8 columns: {line:?}")));
        }
        let num = |s: &str| -> Result<Real> {
            s.parse().map_err(|_| Error::config(format!("bad number {s:?} in loss row")))
        };
        Ok(Self {
            step: cols[0]
                .parse()
                .map_err(|_| Error::config(format!("bad step {:?}", cols[0])))?,
            fre: num(cols[1])?,
            rec: num(cols[2])?,
            adv_d: num(cols[3])?,
            adv_g: num(cols[4])?,
            fm: num(cols[5])?,
            perc: num(cols[6])?,
            total: num(cols[7])?,
        })
    }
}

fn same_shape(g: &Graph, what: &str, a: Var, b: Var) -> Result<()> {
    if g.shape(a) != g.shape(b) {
        return Err(Error::dim(format!("{what}: {:?} vs {:?}", g.shape(a), g.shape(b))));
    }
    Ok(())
}

/// Mean over all elements of `|(1 − M) ⊙ (gt − out)|`. With `whole_image`
/// the mask is ignored and every pixel is supervised.
pub fn rec_loss(g: &mut Graph, gt: Var, out: Var, mask: &Tensor, whole_image: bool) -> Result<Var> {
    same_shape(g, "rec_loss", gt, out)?;
    let diff = g.sub(gt, out)?;
    let diff = if whole_image {
        diff
    } else {
        let channels = g.shape(gt).get(g.shape(gt).len().wrapping_sub(3)).copied().unwrap_or(0);
        let keep = expand_channels(mask, channels)?.map(|m| 1.0 - m);
        if keep.shape() != g.shape(gt) {
            return Err(Error::dim(format!(
                "rec_loss: mask {:?} does not fit images {:?}",
                mask.shape(),
                g.shape(gt)
            )));
        }
        let keep = g.constant(keep);
        g.mul(diff, keep)?
    };
    let abs = g.abs(diff);
    Ok(g.mean(abs))
}

/// `mean(−log σ(real)) + mean(−log(1 − σ(fake)))` in softplus form.
pub fn adv_d_loss(g: &mut Graph, real_logits: Var, fake_logits: Var) -> Result<Var> {
    let neg_real = g.mul_scalar(real_logits, -1.0);
    let a = g.softplus(neg_real);
    let a = g.mean(a);
    let b = g.softplus(fake_logits);
    let b = g.mean(b);
    g.add(a, b)
}

/// `mean(−log σ(fake))` in softplus form.
pub fn adv_g_loss(g: &mut Graph, fake_logits: Var) -> Var {
    let neg = g.mul_scalar(fake_logits, -1.0);
    let s = g.softplus(neg);
    g.mean(s)
}

/// `Σ_i mean|real_i − fake_i|`; the real features are detached here.
pub fn fm_loss(g: &mut Graph, real: &[Var], fake: &[Var]) -> Result<Var> {
    if real.len() != fake.len() || real.is_empty() {
        return Err(Error::contract(format!(
            "fm_loss needs equal non-empty feature lists, got {} and {}",
            real.len(),
            fake.len()
        )));
    }
    let mut total: Option<Var> = None;
    for (&r, &f) in real.iter().zip(fake) {
        same_shape(g, "fm_loss layer", r, f)?;
        let r = g.detach(r);
        let d = g.sub(r, f)?;
        let d = g.abs(d);
        let m = g.mean(d);
        total = Some(match total {
            Some(t) => g.add(t, m)?,
            None => m,
        });
    }
    Ok(total.expect("non-empty lists"))
}

/// Frozen random conv stack standing in for a pretrained feature network.
#[derive(Clone, Debug)]
pub struct PerceptualExtractor {
    store: ParamStore,
    stages: Vec<Conv2d>,
}

impl PerceptualExtractor {
    pub const WIDTHS: [usize; 4] = [8, 16, 16, 32];

    pub fn new(seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(PERCEPTUAL_LABEL);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut stages = Vec::with_capacity(Self::WIDTHS.len());
        let mut cin = 3;
        for (i, &w) in Self::WIDTHS.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            stages.push(Conv2d::new(&mut store, &mut rng, &format!("stage{}", i + 1), cin, w, 3, stride, true)?);
            cin = w;
        }
        Ok(Self { store, stages })
    }

    /// Post-relu activations of each stage.
    pub fn features(&self, g: &mut Graph, image: Var) -> Result<Vec<Var>> {
        let view = self.store.frozen();
        let mut x = image;
        let mut out = Vec::with_capacity(self.stages.len());
        for conv in &self.stages {
            let h = conv.forward(g, &view, x)?;
            x = g.relu(h);
            out.push(x);
        }
        Ok(out)
    }
}

/// `Σ_i sqrt(mean((Φ_i(gt) − Φ_i(out))²))` over the extractor stages.
pub fn perceptual_loss(g: &mut Graph, extractor: &PerceptualExtractor, gt: Var, out: Var) -> Result<Var> {
    same_shape(g, "perceptual_loss", gt, out)?;
    let fg = extractor.features(g, gt)?;
    let fo = extractor.features(g, out)?;
    let mut total: Option<Var> = None;
    for (a, b) in fg.into_iter().zip(fo) {
        let d = g.sub(a, b)?;
        let sq = g.square(d);
        let m = g.mean(sq);
        let r = g.sqrt(m);
        total = Some(match total {
            Some(t) => g.add(t, r)?,
            None => r,
        });
    }
    Ok(total.expect("extractor has stages"))
}

/// Weighted total on the graph, mirroring [`LossTerms::total`].
pub fn total_loss(g: &mut Graph, terms: [Var; 5], w: &LossWeights) -> Result<Var> {
    let [fre, rec, adv_g, fm, perc] = terms;
    let parts = [
        (fre, w.frequency),
        (rec, w.rec),
        (adv_g, w.adv),
        (fm, w.fm),
        (perc, w.perceptual),
    ];
    let mut total: Option<Var> = None;
    for (v, weight) in parts {
        let s = g.mul_scalar(v, weight);
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    Ok(total.expect("five terms"))
}
