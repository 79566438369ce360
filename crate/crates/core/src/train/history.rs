use crate::error::{Error, Result};

pub const HISTORY_COLUMNS: [&str; 9] =
    ["epoch", "d_loss", "g_loss", "mse", "perceptual", "sae", "spn_aux", "psnr", "fid"];

/// Per-epoch mean losses plus the evaluation metrics (NaN on epochs that
/// were not evaluated).
#[derive(Clone, Debug)]
pub struct HistoryRow {
    /// 1-based epoch number.
    pub epoch: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub mse: f64,
    pub perceptual: f64,
    pub sae: f64,
    pub spn_aux: f64,
    pub psnr: f64,
    pub fid: f64,
}

impl PartialEq for HistoryRow {
    /// Bitwise on the floats, so unevaluated (NaN) epochs compare equal.
    fn eq(&self, other: &Self) -> bool {
        self.epoch == other.epoch && self.values().iter().zip(other.values()).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl HistoryRow {
    pub fn new(epoch: usize) -> Self {
        Self {
            epoch,
            d_loss: 0.0,
            g_loss: 0.0,
            mse: 0.0,
            perceptual: 0.0,
            sae: 0.0,
            spn_aux: 0.0,
            psnr: f64::NAN,
            fid: f64::NAN,
        }
    }

    fn values(&self) -> [f64; 8] {
        [self.d_loss, self.g_loss, self.mse, self.perceptual, self.sae, self.spn_aux, self.psnr, self.fid]
    }

    pub(crate) fn scale_losses(&mut self, k: f64) {
        for v in
            [&mut self.d_loss, &mut self.g_loss, &mut self.mse, &mut self.perceptual, &mut self.sae, &mut self.spn_aux]
        {
            *v *= k;
        }
    }

    pub fn csv_header() -> String {
        HISTORY_COLUMNS.join(",")
    }

    /// Floats use the shortest representation that parses back exactly.
    pub fn to_csv(&self) -> String {
        let mut fields = vec![self.epoch.to_string()];
        fields.extend(self.values().iter().map(f64::to_string));
        fields.join(",")
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let bad = |what: &str| Error::Corruption(format!("history row {line:?}: {what}"));
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != HISTORY_COLUMNS.len() {
            return Err(bad("wrong column count"));
        }
        let epoch = fields[0].parse().map_err(|_| bad("bad epoch"))?;
        let v =
            fields[1..].iter().map(|f| f.parse::<f64>().map_err(|_| bad("bad number"))).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            epoch,
            d_loss: v[0],
            g_loss: v[1],
            mse: v[2],
            perceptual: v[3],
            sae: v[4],
            spn_aux: v[5],
            psnr: v[6],
            fid: v[7],
        })
    }

    /// Header plus one line per row.
    pub fn render_csv(rows: &[HistoryRow]) -> String {
        let mut out = Self::csv_header();
        out.push('\n');
        for r in rows {
            out.push_str(&r.to_csv());
            out.push('\n');
        }
        out
    }

    pub fn parse_csv(text: &str) -> Result<Vec<HistoryRow>> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == Self::csv_header() => lines.map(Self::from_csv).collect(),
            Some(h) => Err(Error::Corruption(format!("unexpected history header {h:?}"))),
            None => Ok(Vec::new()),
        }
    }
}
