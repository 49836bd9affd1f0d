//! Adaptive explicit Runge–Kutta integration with the Dormand–Prince 8(5,3)
//! pair (Hairer's DOP853), including its 7th-order continuous extension.
//!
//! Three entry points:
//!
//! * [`integrate`] / [`integrate_ode`] record every accepted step together
//!   with its interpolant in a [`Trajectory`];
//! * [`flow`] / [`flow_ode`] only return the end state (no dense-output
//!   stages are spent);
//! * [`find_event`] locates a sign change of a scalar function along a
//!   recorded trajectory.

use crate::dynamics::{State, SystemConfig};
use crate::error::{Error, Result};

/// A first-order system `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()>;
}

impl OdeSystem for SystemConfig {
    fn dim(&self) -> usize {
        SystemConfig::dim(self)
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        SystemConfig::rhs(self, y, dy)
    }
}

/// Adapter turning an infallible closure into an [`OdeSystem`].
pub struct FnSystem<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(f64, &[f64], &mut [f64])> FnSystem<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(f64, &[f64], &mut [f64])> OdeSystem for FnSystem<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) -> Result<()> {
        (self.f)(t, y, dy);
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorSettings {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Largest allowed step magnitude.
    pub max_step: f64,
    /// Nominal order of the propagating formula of the embedded pair.
    pub method_order: u32,
    /// Hard cap on the number of attempted steps of one integration.
    pub max_steps: usize,
}

impl Default for IntegratorSettings {
    fn default() -> Self {
        Self {
            rel_tol: 1e-12,
            abs_tol: 1e-12,
            max_step: f64::INFINITY,
            method_order: 8,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorSettings {
    pub fn with_tolerance(tol: f64) -> Self {
        Self {
            rel_tol: tol,
            abs_tol: tol,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        if !(self.max_step > 0.0) {
            return Err(Error::InvalidConfig("max_step must be positive".into()));
        }
        Ok(())
    }
}

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 1.0 / 3.0;
const FAC_MAX: f64 = 6.0;
const UNDERFLOW_FRACTION: f64 = 1e-14;

/// Interpolant of one accepted step.
#[derive(Debug, Clone)]
pub struct Segment {
    pub t0: f64,
    pub h: f64,
    cont: [Vec<f64>; 8],
}

impl Segment {
    pub fn t1(&self) -> f64 {
        self.t0 + self.h
    }

    pub fn start(&self) -> &[f64] {
        &self.cont[0]
    }

    fn contains(&self, t: f64) -> bool {
        let (a, b) = if self.h > 0.0 {
            (self.t0, self.t1())
        } else {
            (self.t1(), self.t0)
        };
        t >= a && t <= b
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let s = (t - self.t0) / self.h;
        let s1 = 1.0 - s;
        let c = &self.cont;
        for (i, o) in out.iter_mut().enumerate() {
            let conpar = c[4][i] + s * (c[5][i] + s1 * (c[6][i] + s * c[7][i]));
            *o = c[0][i] + s * (c[1][i] + s1 * (c[2][i] + s * (c[3][i] + s1 * conpar)));
        }
    }
}

/// Accepted steps of one integration with their dense output.
#[derive(Debug, Clone)]
pub struct Trajectory {
    t_start: f64,
    segments: Vec<Segment>,
    y_start: Vec<f64>,
    y_last: Vec<f64>,
    t_last: f64,
    failure: Option<Error>,
}

impl Trajectory {
    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    /// Last time reached (the requested end when complete).
    pub fn t_end(&self) -> f64 {
        self.t_last
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn failure(&self) -> Option<&Error> {
        self.failure.as_ref()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn n_steps(&self) -> usize {
        self.segments.len()
    }

    /// Times of the step grid, including both ends.
    pub fn grid(&self) -> Vec<f64> {
        let mut g: Vec<f64> = self.segments.iter().map(|s| s.t0).collect();
        g.push(self.t_last);
        g
    }

    /// Stored state at grid node `k`.
    pub fn grid_state(&self, k: usize) -> Option<&[f64]> {
        if k < self.segments.len() {
            Some(self.segments[k].start())
        } else if k == self.segments.len() {
            Some(&self.y_last)
        } else {
            None
        }
    }

    pub fn final_values(&self) -> &[f64] {
        &self.y_last
    }

    pub fn initial_values(&self) -> &[f64] {
        &self.y_start
    }

    fn in_span(&self, t: f64) -> bool {
        let (a, b) = if self.t_last >= self.t_start {
            (self.t_start, self.t_last)
        } else {
            (self.t_last, self.t_start)
        };
        t >= a && t <= b
    }

    fn segment_index(&self, t: f64) -> usize {
        let forward = self.t_last >= self.t_start;
        // First segment whose end lies at or beyond t in the direction of motion.
        let idx = self.segments.partition_point(|s| {
            if forward {
                s.t1() < t
            } else {
                s.t1() > t
            }
        });
        idx.min(self.segments.len().saturating_sub(1))
    }

    /// Interpolated phase-space vector at `t`.
    pub fn eval(&self, t: f64) -> Result<Vec<f64>> {
        if !self.in_span(t) {
            return Err(Error::DomainError(format!(
                "t = {t} outside trajectory span [{}, {}]",
                self.t_start, self.t_last
            )));
        }
        if self.segments.is_empty() {
            return Ok(self.y_start.clone());
        }
        if t == self.t_last {
            return Ok(self.y_last.clone());
        }
        let seg = &self.segments[self.segment_index(t)];
        debug_assert!(seg.contains(t));
        let mut out = vec![0.0; self.y_start.len()];
        seg.eval_into(t, &mut out);
        Ok(out)
    }

    pub fn state_at(&self, t: f64) -> Result<State> {
        State::from_vec(t, self.eval(t)?)
    }

    pub fn final_state(&self) -> Result<State> {
        State::from_vec(self.t_last, self.y_last.clone())
    }

    /// States on a uniform grid of step `dt` from start to end; the end
    /// point is always included.
    pub fn sample(&self, dt: f64) -> Result<Vec<State>> {
        if !(dt > 0.0) {
            return Err(Error::DomainError("sample step must be positive".into()));
        }
        let span = self.t_last - self.t_start;
        let dir = if span >= 0.0 { 1.0 } else { -1.0 };
        let n = (span.abs() / dt).floor() as usize;
        let mut out = Vec::with_capacity(n + 2);
        for k in 0..=n {
            let t = self.t_start + dir * dt * k as f64;
            if (t - self.t_last) * dir > 0.0 {
                break;
            }
            out.push(self.state_at(t)?);
        }
        if out.last().map_or(true, |s| s.t != self.t_last) {
            out.push(self.final_state()?);
        }
        Ok(out)
    }
}

#[rustfmt::skip]
mod tableau {
    pub const C2: f64 = 0.526001519587677318785587544488E-01;
    pub const C3: f64 = 0.789002279381515978178381316732E-01;
    pub const C4: f64 = 0.118350341907227396726757197510E+00;
    pub const C5: f64 = 0.281649658092772603273242802490E+00;
    pub const C6: f64 = 0.333333333333333333333333333333E+00;
    pub const C7: f64 = 0.25E+00;
    pub const C8: f64 = 0.307692307692307692307692307692E+00;
    pub const C9: f64 = 0.651282051282051282051282051282E+00;
    pub const C10: f64 = 0.6E+00;
    pub const C11: f64 = 0.857142857142857142857142857142E+00;
    pub const C14: f64 = 0.1E+00;
    pub const C15: f64 = 0.2E+00;
    pub const C16: f64 = 0.777777777777777777777777777778E+00;

    pub const A21: f64 = 5.26001519587677318785587544488E-2;
    pub const A31: f64 = 1.97250569845378994544595329183E-2;
    pub const A32: f64 = 5.91751709536136983633785987549E-2;
    pub const A41: f64 = 2.95875854768068491816892993775E-2;
    pub const A43: f64 = 8.87627564304205475450678981324E-2;
    pub const A51: f64 = 2.41365134159266685502369798665E-1;
    pub const A53: f64 = -8.84549479328286085344864962717E-1;
    pub const A54: f64 = 9.24834003261792003115737966543E-1;
    pub const A61: f64 = 3.7037037037037037037037037037E-2;
    pub const A64: f64 = 1.70828608729473871279604482173E-1;
    pub const A65: f64 = 1.25467687566822425016691814123E-1;
    pub const A71: f64 = 3.7109375E-2;
    pub const A74: f64 = 1.70252211019544039314978060272E-1;
    pub const A75: f64 = 6.02165389804559606850219397283E-2;
    pub const A76: f64 = -1.7578125E-2;
    pub const A81: f64 = 3.70920001185047927108779319836E-2;
    pub const A84: f64 = 1.70383925712239993810214054705E-1;
    pub const A85: f64 = 1.07262030446373284651809199168E-1;
    pub const A86: f64 = -1.53194377486244017527936158236E-2;
    pub const A87: f64 = 8.27378916381402288758473766002E-3;
    pub const A91: f64 = 6.24110958716075717114429577812E-1;
    pub const A94: f64 = -3.36089262944694129406857109825E0;
    pub const A95: f64 = -8.68219346841726006818189891453E-1;
    pub const A96: f64 = 2.75920996994467083049415600797E1;
    pub const A97: f64 = 2.01540675504778934086186788979E1;
    pub const A98: f64 = -4.34898841810699588477366255144E1;
    pub const A101: f64 = 4.77662536438264365890433908527E-1;
    pub const A104: f64 = -2.48811461997166764192642586468E0;
    pub const A105: f64 = -5.90290826836842996371446475743E-1;
    pub const A106: f64 = 2.12300514481811942347288949897E1;
    pub const A107: f64 = 1.52792336328824235832596922938E1;
    pub const A108: f64 = -3.32882109689848629194453265587E1;
    pub const A109: f64 = -2.03312017085086261358222928593E-2;
    pub const A111: f64 = -9.3714243008598732571704021658E-1;
    pub const A114: f64 = 5.18637242884406370830023853209E0;
    pub const A115: f64 = 1.09143734899672957818500254654E0;
    pub const A116: f64 = -8.14978701074692612513997267357E0;
    pub const A117: f64 = -1.85200656599969598641566180701E1;
    pub const A118: f64 = 2.27394870993505042818970056734E1;
    pub const A119: f64 = 2.49360555267965238987089396762E0;
    pub const A1110: f64 = -3.0467644718982195003823669022E0;
    pub const A121: f64 = 2.27331014751653820792359768449E0;
    pub const A124: f64 = -1.05344954667372501984066689879E1;
    pub const A125: f64 = -2.00087205822486249909675718444E0;
    pub const A126: f64 = -1.79589318631187989172765950534E1;
    pub const A127: f64 = 2.79488845294199600508499808837E1;
    pub const A128: f64 = -2.85899827713502369474065508674E0;
    pub const A129: f64 = -8.87285693353062954433549289258E0;
    pub const A1210: f64 = 1.23605671757943030647266201528E1;
    pub const A1211: f64 = 6.43392746015763530355970484046E-1;
    pub const A141: f64 = 5.61675022830479523392909219681E-2;
    pub const A147: f64 = 2.53500210216624811088794765333E-1;
    pub const A148: f64 = -2.46239037470802489917441475441E-1;
    pub const A149: f64 = -1.24191423263816360469010140626E-1;
    pub const A1410: f64 = 1.5329179827876569731206322685E-1;
    pub const A1411: f64 = 8.20105229563468988491666602057E-3;
    pub const A1412: f64 = 7.56789766054569976138603589584E-3;
    pub const A1413: f64 = -8.298E-3;
    pub const A151: f64 = 3.18346481635021405060768473261E-2;
    pub const A156: f64 = 2.83009096723667755288322961402E-2;
    pub const A157: f64 = 5.35419883074385676223797384372E-2;
    pub const A158: f64 = -5.49237485713909884646569340306E-2;
    pub const A1511: f64 = -1.08347328697249322858509316994E-4;
    pub const A1512: f64 = 3.82571090835658412954920192323E-4;
    pub const A1513: f64 = -3.40465008687404560802977114492E-4;
    pub const A1514: f64 = 1.41312443674632500278074618366E-1;
    pub const A161: f64 = -4.28896301583791923408573538692E-1;
    pub const A166: f64 = -4.69762141536116384314449447206E0;
    pub const A167: f64 = 7.68342119606259904184240953878E0;
    pub const A168: f64 = 4.06898981839711007970213554331E0;
    pub const A169: f64 = 3.56727187455281109270669543021E-1;
    pub const A1613: f64 = -1.39902416515901462129418009734E-3;
    pub const A1614: f64 = 2.9475147891527723389556272149E0;
    pub const A1615: f64 = -9.15095847217987001081870187138E0;

    pub const B1: f64 = 5.42937341165687622380535766363E-2;
    pub const B6: f64 = 4.45031289275240888144113950566E0;
    pub const B7: f64 = 1.89151789931450038304281599044E0;
    pub const B8: f64 = -5.8012039600105847814672114227E0;
    pub const B9: f64 = 3.1116436695781989440891606237E-1;
    pub const B10: f64 = -1.52160949662516078556178806805E-1;
    pub const B11: f64 = 2.01365400804030348374776537501E-1;
    pub const B12: f64 = 4.47106157277725905176885569043E-2;

    pub const BHH1: f64 = 0.244094488188976377952755905512E+00;
    pub const BHH2: f64 = 0.733846688281611857341361741547E+00;
    pub const BHH3: f64 = 0.220588235294117647058823529412E-01;

    pub const ER1: f64 = 0.1312004499419488073250102996E-01;
    pub const ER6: f64 = -0.1225156446376204440720569753E+01;
    pub const ER7: f64 = -0.4957589496572501915214079952E+00;
    pub const ER8: f64 = 0.1664377182454986536961530415E+01;
    pub const ER9: f64 = -0.3503288487499736816886487290E+00;
    pub const ER10: f64 = 0.3341791187130174790297318841E+00;
    pub const ER11: f64 = 0.8192320648511571246570742613E-01;
    pub const ER12: f64 = -0.2235530786388629525884427845E-01;

    // Continuous extension: rows for k1, k6..k12, f(t+h), k14, k15, k16.
    pub const D4: [f64; 12] = [
        -0.84289382761090128651353491142E+01, 0.56671495351937776962531783590E+00,
        -0.30689499459498916912797304727E+01, 0.23846676565120698287728149680E+01,
        0.21170345824450282767155149946E+01, -0.87139158377797299206789907490E+00,
        0.22404374302607882758541771650E+01, 0.63157877876946881815570249290E+00,
        -0.88990336451333310820698117400E-01, 0.18148505520854727256656404962E+02,
        -0.91946323924783554000451984436E+01, -0.44360363875948939664310572000E+01,
    ];
    pub const D5: [f64; 12] = [
        0.10427508642579134603413151009E+02, 0.24228349177525818288430175319E+03,
        0.16520045171727028198505394887E+03, -0.37454675472269020279518312152E+03,
        -0.22113666853125306036270938578E+02, 0.77334326684722638389603898808E+01,
        -0.30674084731089398182061213626E+02, -0.93321305264302278729567221706E+01,
        0.15697238121770843886131091075E+02, -0.31139403219565177677282850411E+02,
        -0.93529243588444783865713862664E+01, 0.35816841486394083752465898540E+02,
    ];
    pub const D6: [f64; 12] = [
        0.19985053242002433820987653617E+02, -0.38703730874935176555105901742E+03,
        -0.18917813819516756882830838328E+03, 0.52780815920542364900561016686E+03,
        -0.11573902539959630126141871134E+02, 0.68812326946963000169666922661E+01,
        -0.10006050966910838403183860980E+01, 0.77771377980534432092869265740E+00,
        -0.27782057523535084065932004339E+01, -0.60196695231264120758267380846E+02,
        0.84320405506677161018159903784E+02, 0.11992291136182789328035130030E+02,
    ];
    pub const D7: [f64; 12] = [
        -0.25693933462703749003312586129E+02, -0.15418974869023643374053993627E+03,
        -0.23152937917604549567536039109E+03, 0.35763911791061412378285349910E+03,
        0.93405324183624310003907691704E+02, -0.37458323136451633156875139351E+02,
        0.10409964950896230045147246184E+03, 0.29840293426660503123344363579E+02,
        -0.43533456590011143754432175058E+02, 0.96324553959188282948394950600E+02,
        -0.39177261675615439165231486172E+02, -0.14972683625798562581422125276E+03,
    ];
}

use tableau::*;

/// `out = y + h Σ coef_i k_i`.
fn combine(out: &mut [f64], y: &[f64], h: f64, terms: &[(f64, &[f64])]) {
    out.copy_from_slice(y);
    for &(c, k) in terms {
        let hc = h * c;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += hc * ki;
        }
    }
}

/// Step-by-step DOP853 driver.
struct Stepper<'a, S: OdeSystem + ?Sized> {
    sys: &'a S,
    settings: IntegratorSettings,
    t: f64,
    y: Vec<f64>,
    f: Vec<f64>,
    h: f64,
    facold: f64,
    last_rejected: bool,
    attempts: usize,
    // k[0] = k1 (= f), k[1..12] = stages 2..12.
    k: Vec<Vec<f64>>,
    f_new: Vec<f64>,
    y_new: Vec<f64>,
    tmp: Vec<f64>,
    span: f64,
}

impl<'a, S: OdeSystem + ?Sized> Stepper<'a, S> {
    fn new(sys: &'a S, t0: f64, y0: &[f64], t_end: f64, settings: IntegratorSettings) -> Result<Self> {
        settings.validate()?;
        let n = sys.dim();
        if y0.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: y0.len(),
            });
        }
        let mut f = vec![0.0; n];
        sys.rhs(t0, y0, &mut f)?;
        let mut st = Self {
            sys,
            settings,
            t: t0,
            y: y0.to_vec(),
            f,
            h: 0.0,
            facold: 1e-4,
            last_rejected: false,
            attempts: 0,
            k: vec![vec![0.0; n]; 12],
            f_new: vec![0.0; n],
            y_new: vec![0.0; n],
            tmp: vec![0.0; n],
            span: (t_end - t0).abs(),
        };
        st.h = st.initial_step(t_end)?;
        Ok(st)
    }

    fn scale(&self, i: usize, y: f64) -> f64 {
        let _ = i;
        self.settings.abs_tol + self.settings.rel_tol * y.abs()
    }

    fn initial_step(&mut self, t_end: f64) -> Result<f64> {
        let n = self.y.len();
        let dir = (t_end - self.t).signum();
        let hmax = self.settings.max_step.min(self.span);
        let (mut dnf, mut dny) = (0.0, 0.0);
        for i in 0..n {
            let sk = self.scale(i, self.y[i]);
            dnf += (self.f[i] / sk).powi(2);
            dny += (self.y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 {
            1e-6
        } else {
            (dny / dnf).sqrt() * 0.01
        };
        h = h.min(hmax) * dir;
        combine(&mut self.tmp, &self.y, h, &[(1.0, &self.f)]);
        self.sys.rhs(self.t + h, &self.tmp, &mut self.f_new)?;
        let mut der2: f64 = 0.0;
        for i in 0..n {
            let sk = self.scale(i, self.y[i]);
            der2 += ((self.f_new[i] - self.f[i]) / sk).powi(2);
        }
        der2 = der2.sqrt() / h.abs();
        let der12 = der2.max(dnf.sqrt());
        let order = self.settings.method_order.max(1) as f64;
        let h1 = if der12 <= 1e-15 {
            (h.abs() * 1e-3).max(1e-6)
        } else {
            (0.01 / der12).powf(1.0 / order)
        };
        Ok((100.0 * h.abs()).min(h1).min(hmax) * dir)
    }

    /// Performs one accepted step toward `t_end`; returns the step's
    /// interpolant when `dense` is set.
    fn advance(&mut self, t_end: f64, dense: bool) -> Result<Option<Segment>> {
        let dir = (t_end - self.t).signum();
        let n = self.y.len();
        loop {
            self.attempts += 1;
            if self.attempts > self.settings.max_steps {
                return Err(Error::StepSizeUnderflow { t: self.t, h: self.h });
            }
            let mut h = self.h.abs().min(self.settings.max_step) * dir;
            let last = (self.t + h - t_end) * dir >= 0.0;
            if last {
                h = t_end - self.t;
            }
            if h.abs() < UNDERFLOW_FRACTION * self.span && !last {
                return Err(Error::StepSizeUnderflow { t: self.t, h });
            }
            self.stages(h)?;

            // Error estimate.
            let (mut err, mut err2) = (0.0, 0.0);
            {
                let k = &self.k;
                for i in 0..n {
                    let sk = self.settings.abs_tol
                        + self.settings.rel_tol * self.y[i].abs().max(self.y_new[i].abs());
                    let inc = self.tmp[i];
                    let e2 = inc - BHH1 * k[0][i] - BHH2 * k[8][i] - BHH3 * k[11][i];
                    err2 += (e2 / sk).powi(2);
                    let e1 = ER1 * k[0][i]
                        + ER6 * k[5][i]
                        + ER7 * k[6][i]
                        + ER8 * k[7][i]
                        + ER9 * k[8][i]
                        + ER10 * k[9][i]
                        + ER11 * k[10][i]
                        + ER12 * k[11][i];
                    err += (e1 / sk).powi(2);
                }
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (deno * n as f64)).sqrt();
            if !err.is_finite() {
                self.h = h * 0.25;
                self.last_rejected = true;
                continue;
            }

            let fac11 = err.powf(1.0 / 8.0);
            let fac = (fac11 / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            if err <= 1.0 {
                self.facold = err.max(1e-4);
                self.sys.rhs(self.t + h, &self.y_new, &mut self.f_new)?;
                let seg = if dense { Some(self.dense_segment(h)?) } else { None };
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = h_new.abs().min(h.abs()) * dir;
                }
                self.last_rejected = false;
                self.t = if last { t_end } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.y_new);
                std::mem::swap(&mut self.f, &mut self.f_new);
                if !last {
                    self.h = h_new;
                }
                return Ok(seg);
            }
            self.h = h / (1.0 / FAC_MIN).min(fac11 / SAFETY);
            self.last_rejected = true;
        }
    }

    /// Stages 2..12; leaves the solution increment in `tmp` and the new
    /// solution in `y_new`.
    fn stages(&mut self, h: f64) -> Result<()> {
        let t = self.t;
        let (y, sys) = (&self.y, self.sys);
        let k = &mut self.k;
        k[0].copy_from_slice(&self.f);
        let mut ys = std::mem::take(&mut self.tmp);

        macro_rules! stage {
            ($idx:expr, $c:expr, [$(($a:expr, $j:expr)),*]) => {{
                combine(&mut ys, y, h, &[$(($a, &k[$j][..])),*]);
                let (_, rest) = k.split_at_mut($idx);
                sys.rhs(t + $c * h, &ys, &mut rest[0])?;
            }};
        }

        stage!(1, C2, [(A21, 0)]);
        stage!(2, C3, [(A31, 0), (A32, 1)]);
        stage!(3, C4, [(A41, 0), (A43, 2)]);
        stage!(4, C5, [(A51, 0), (A53, 2), (A54, 3)]);
        stage!(5, C6, [(A61, 0), (A64, 3), (A65, 4)]);
        stage!(6, C7, [(A71, 0), (A74, 3), (A75, 4), (A76, 5)]);
        stage!(7, C8, [(A81, 0), (A84, 3), (A85, 4), (A86, 5), (A87, 6)]);
        stage!(8, C9, [(A91, 0), (A94, 3), (A95, 4), (A96, 5), (A97, 6), (A98, 7)]);
        stage!(9, C10, [(A101, 0), (A104, 3), (A105, 4), (A106, 5), (A107, 6), (A108, 7), (A109, 8)]);
        stage!(10, C11, [(A111, 0), (A114, 3), (A115, 4), (A116, 5), (A117, 6), (A118, 7), (A119, 8), (A1110, 9)]);
        stage!(11, 1.0, [(A121, 0), (A124, 3), (A125, 4), (A126, 5), (A127, 6), (A128, 7), (A129, 8), (A1210, 9), (A1211, 10)]);

        // Increment of the 8th-order solution.
        let n = y.len();
        for i in 0..n {
            ys[i] = B1 * k[0][i]
                + B6 * k[5][i]
                + B7 * k[6][i]
                + B8 * k[7][i]
                + B9 * k[8][i]
                + B10 * k[9][i]
                + B11 * k[10][i]
                + B12 * k[11][i];
            self.y_new[i] = y[i] + h * ys[i];
        }
        self.tmp = ys;
        Ok(())
    }

    /// Builds the continuous extension of the step just accepted. Needs
    /// `f_new = f(t + h, y_new)`; spends three extra evaluations.
    fn dense_segment(&mut self, h: f64) -> Result<Segment> {
        let n = self.y.len();
        let (y, y_new, f_new, k) = (&self.y, &self.y_new, &self.f_new, &self.k);
        let mut cont: [Vec<f64>; 8] = Default::default();
        cont[0] = y.clone();
        cont[1] = vec![0.0; n];
        cont[2] = vec![0.0; n];
        cont[3] = vec![0.0; n];
        for i in 0..n {
            let ydiff = y_new[i] - y[i];
            let bspl = h * k[0][i] - ydiff;
            cont[1][i] = ydiff;
            cont[2][i] = bspl;
            cont[3][i] = ydiff - h * f_new[i] - bspl;
        }
        let mut ys = vec![0.0; n];
        let mut k14 = vec![0.0; n];
        let mut k15 = vec![0.0; n];
        let mut k16 = vec![0.0; n];
        combine(
            &mut ys,
            y,
            h,
            &[
                (A141, &k[0]),
                (A147, &k[6]),
                (A148, &k[7]),
                (A149, &k[8]),
                (A1410, &k[9]),
                (A1411, &k[10]),
                (A1412, &k[11]),
                (A1413, f_new),
            ],
        );
        self.sys.rhs(self.t + C14 * h, &ys, &mut k14)?;
        combine(
            &mut ys,
            y,
            h,
            &[
                (A151, &k[0]),
                (A156, &k[5]),
                (A157, &k[6]),
                (A158, &k[7]),
                (A1511, &k[10]),
                (A1512, &k[11]),
                (A1513, f_new),
                (A1514, &k14),
            ],
        );
        self.sys.rhs(self.t + C15 * h, &ys, &mut k15)?;
        combine(
            &mut ys,
            y,
            h,
            &[
                (A161, &k[0]),
                (A166, &k[5]),
                (A167, &k[6]),
                (A168, &k[7]),
                (A169, &k[8]),
                (A1613, f_new),
                (A1614, &k14),
                (A1615, &k15),
            ],
        );
        self.sys.rhs(self.t + C16 * h, &ys, &mut k16)?;

        let rows: [&[f64]; 12] = [
            &k[0], &k[5], &k[6], &k[7], &k[8], &k[9], &k[10], &k[11], f_new, &k14, &k15, &k16,
        ];
        for (slot, d) in [(4, &D4), (5, &D5), (6, &D6), (7, &D7)] {
            let mut c = vec![0.0; n];
            for (coef, row) in d.iter().zip(rows.iter()) {
                for (ci, ri) in c.iter_mut().zip(row.iter()) {
                    *ci += coef * ri;
                }
            }
            c.iter_mut().for_each(|v| *v *= h);
            cont[slot] = c;
        }
        Ok(Segment {
            t0: self.t,
            h,
            cont,
        })
    }
}

/// Integrates a generic system from `t0` to `t_end`, recording dense output.
/// On failure the partial trajectory is returned with the error.
pub fn integrate_ode<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    settings: IntegratorSettings,
) -> (Trajectory, Option<Error>) {
    let mut traj = Trajectory {
        t_start: t0,
        segments: Vec::new(),
        y_start: y0.to_vec(),
        y_last: y0.to_vec(),
        t_last: t0,
        failure: None,
    };
    if t_end == t0 {
        return (traj, None);
    }
    let mut st = match Stepper::new(sys, t0, y0, t_end, settings) {
        Ok(st) => st,
        Err(e) => {
            traj.failure = Some(e.clone());
            return (traj, Some(e));
        }
    };
    while st.t != t_end {
        match st.advance(t_end, true) {
            Ok(seg) => {
                traj.segments.extend(seg);
                traj.t_last = st.t;
                traj.y_last.copy_from_slice(&st.y);
            }
            Err(e) => {
                traj.failure = Some(e.clone());
                return (traj, Some(e));
            }
        }
    }
    (traj, None)
}

/// End state of a generic system, calling `observe(t, y)` after every
/// accepted step.
pub fn flow_ode<S: OdeSystem + ?Sized>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    settings: IntegratorSettings,
    mut observe: impl FnMut(f64, &[f64]),
) -> Result<Vec<f64>> {
    if t_end == t0 {
        return Ok(y0.to_vec());
    }
    let mut st = Stepper::new(sys, t0, y0, t_end, settings)?;
    while st.t != t_end {
        st.advance(t_end, false)?;
        observe(st.t, &st.y);
    }
    Ok(st.y)
}

/// Integrates the N-body field from `s0` to absolute time `t_end`.
pub fn integrate(
    config: &SystemConfig,
    s0: &State,
    t_end: f64,
    settings: IntegratorSettings,
) -> Result<Trajectory> {
    match integrate_ode(config, s0.t, &s0.u, t_end, settings) {
        (traj, None) => Ok(traj),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`integrate`] but keeps the partial trajectory on failure; the
/// failure is also available through [`Trajectory::failure`].
pub fn integrate_partial(
    config: &SystemConfig,
    s0: &State,
    t_end: f64,
    settings: IntegratorSettings,
) -> Trajectory {
    integrate_ode(config, s0.t, &s0.u, t_end, settings).0
}

/// `φ_T(s0)`: the state a duration `duration` after `s0` (negative for
/// backward integration).
pub fn flow(config: &SystemConfig, s0: &State, duration: f64, settings: IntegratorSettings) -> Result<State> {
    let t_end = s0.t + duration;
    let u = flow_ode(config, s0.t, &s0.u, t_end, settings, |_, _| {})?;
    State::from_vec(t_end, u)
}

/// [`flow`] that also reports the smallest relevant pairwise distance seen
/// at the accepted step nodes.
pub fn flow_with_min_distance(
    config: &SystemConfig,
    s0: &State,
    duration: f64,
    settings: IntegratorSettings,
) -> Result<(State, f64)> {
    let t_end = s0.t + duration;
    let mut dmin = config.min_relevant_distance(&s0.u).0;
    let u = flow_ode(config, s0.t, &s0.u, t_end, settings, |_, y| {
        dmin = dmin.min(config.min_relevant_distance(y).0);
    })?;
    Ok((State::from_vec(t_end, u)?, dmin))
}

/// Absolute tolerance on the event value at the returned time.
pub const EVENT_TOL: f64 = 1e-11;

/// Locates `t*` with `event(t*, traj(t*)) ≈ 0` for the sign change closest to
/// `t_guess`, searching outward from the step that contains it.
pub fn find_event(
    traj: &Trajectory,
    event: impl Fn(f64, &[f64]) -> f64,
    t_guess: f64,
) -> Result<f64> {
    let g = |t: f64| -> Result<f64> { Ok(event(t, &traj.eval(t)?)) };
    let segs = traj.segments();
    if segs.is_empty() {
        return Err(Error::NoSignChange { t_guess });
    }
    let t_clamped = if traj.in_span(t_guess) {
        t_guess
    } else if (t_guess - traj.t_start()).abs() < (t_guess - traj.t_end()).abs() {
        traj.t_start()
    } else {
        traj.t_end()
    };
    let start = traj.segment_index(t_clamped);
    const SUB: usize = 8;
    let bracket_in = |idx: usize| -> Result<Option<(f64, f64, f64, f64)>> {
        let s = &segs[idx];
        let mut best: Option<(f64, f64, f64, f64)> = None;
        let mut ta = s.t0;
        let mut ga = g(ta)?;
        for q in 1..=SUB {
            let tb = if q == SUB { s.t1() } else { s.t0 + s.h * q as f64 / SUB as f64 };
            let gb = g(tb)?;
            if ga == 0.0 {
                return Ok(Some((ta, ta, ga, ga)));
            }
            if ga.signum() != gb.signum() {
                let mid = 0.5 * (ta + tb);
                let closer = best.map_or(true, |(a, b, _, _)| {
                    (mid - t_clamped).abs() < (0.5 * (a + b) - t_clamped).abs()
                });
                if closer {
                    best = Some((ta, tb, ga, gb));
                }
            }
            ta = tb;
            ga = gb;
        }
        Ok(best)
    };
    let mut found = None;
    for offset in 0..segs.len() {
        let mut candidates = Vec::new();
        if start + offset < segs.len() {
            candidates.push(start + offset);
        }
        if offset > 0 && start >= offset {
            candidates.push(start - offset);
        }
        let mut hits: Vec<(f64, f64, f64, f64)> = Vec::new();
        for idx in candidates {
            if let Some(b) = bracket_in(idx)? {
                hits.push(b);
            }
        }
        if let Some(b) = hits.into_iter().min_by(|a, b| {
            let da = (0.5 * (a.0 + a.1) - t_clamped).abs();
            let db = (0.5 * (b.0 + b.1) - t_clamped).abs();
            da.total_cmp(&db)
        }) {
            found = Some(b);
            break;
        }
    }
    let (mut a, mut b, mut ga, gb) = found.ok_or(Error::NoSignChange { t_guess })?;
    if ga == 0.0 {
        return Ok(a);
    }
    if gb == 0.0 {
        return Ok(b);
    }
    // Safeguarded Newton with a central-difference derivative on the dense output.
    let mut t = 0.5 * (a + b);
    for _ in 0..200 {
        let gt = g(t)?;
        if gt.abs() < 0.01 * EVENT_TOL || (b - a).abs() <= 4.0 * f64::EPSILON * t.abs().max(1.0) {
            return Ok(t);
        }
        if gt.signum() == ga.signum() {
            a = t;
            ga = gt;
        } else {
            b = t;
        }
        let delta = 1e-6 * (b - a).abs().max(1e-9);
        let lo = (t - delta).max(a.min(b)).min(a.max(b));
        let hi = (t + delta).max(a.min(b)).min(a.max(b));
        let slope = if hi > lo { (g(hi)? - g(lo)?) / (hi - lo) } else { 0.0 };
        let newton = if slope != 0.0 { t - gt / slope } else { f64::NAN };
        let inside = newton.is_finite() && (newton - a) * (newton - b) < 0.0;
        t = if inside { newton } else { 0.5 * (a + b) };
    }
    Ok(t)
}
