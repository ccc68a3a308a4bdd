use super::Dataset;

/// One person-period row, materialized from an [`AugmentedDataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedRow {
    pub subject_id: i64,
    pub t_star: u32,
    pub y: u8,
    pub x_star: Vec<f64>,
    pub z_star: Vec<f64>,
}

/// Person-period data stored column-wise. Rows of one subject form a
/// contiguous block `subject_offsets[i]..subject_offsets[i + 1]` with
/// `t_star = 1, 2, ..., obs_time`; only the last row of a block can have
/// `y = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedDataset {
    pub subject_ids: Vec<i64>,
    /// Subject index of every row.
    pub subject_of_row: Vec<usize>,
    pub t_star: Vec<u32>,
    pub y: Vec<u8>,
    /// Row-major `n x p`.
    pub x: Vec<f64>,
    /// Row-major `n x q`.
    pub z: Vec<f64>,
    pub subject_offsets: Vec<usize>,
    pub p: usize,
    pub q: usize,
    pub k_max: u32,
}

impl AugmentedDataset {
    pub fn n(&self) -> usize {
        self.t_star.len()
    }

    pub fn n_subjects(&self) -> usize {
        self.subject_offsets.len() - 1
    }

    #[inline]
    pub fn x_row(&self, r: usize) -> &[f64] {
        &self.x[r * self.p..(r + 1) * self.p]
    }

    #[inline]
    pub fn z_row(&self, r: usize) -> &[f64] {
        &self.z[r * self.q..(r + 1) * self.q]
    }

    pub fn row(&self, r: usize) -> AugmentedRow {
        AugmentedRow {
            subject_id: self.subject_ids[self.subject_of_row[r]],
            t_star: self.t_star[r],
            y: self.y[r],
            x_star: self.x_row(r).to_vec(),
            z_star: self.z_row(r).to_vec(),
        }
    }

    pub fn rows(&self) -> impl Iterator<Item = AugmentedRow> + '_ {
        (0..self.n()).map(|r| self.row(r))
    }

    /// Per-row values of partitioning variable `l`.
    pub fn z_column(&self, l: usize) -> Vec<f64> {
        (0..self.n()).map(|r| self.z[r * self.q + l]).collect()
    }

    /// At-risk rows and events per time point `1..=max t_star`.
    pub fn time_counts(&self) -> Vec<(usize, usize)> {
        let tmax = self.t_star.iter().copied().max().unwrap_or(0) as usize;
        let mut counts = vec![(0usize, 0usize); tmax];
        for (t, y) in self.t_star.iter().zip(&self.y) {
            let c = &mut counts[*t as usize - 1];
            c.0 += 1;
            c.1 += *y as usize;
        }
        counts
    }
}

/// Expands each subject into `obs_time` rows with the binary response
/// `y_t = 1` iff `t = obs_time` and the subject had an event.
pub fn augment(dataset: &Dataset) -> AugmentedDataset {
    let (p, q) = (dataset.p(), dataset.q());
    let n = dataset.augmented_len();
    let mut out = AugmentedDataset {
        subject_ids: Vec::with_capacity(dataset.len()),
        subject_of_row: Vec::with_capacity(n),
        t_star: Vec::with_capacity(n),
        y: Vec::with_capacity(n),
        x: Vec::with_capacity(n * p),
        z: Vec::with_capacity(n * q),
        subject_offsets: Vec::with_capacity(dataset.len() + 1),
        p,
        q,
        k_max: dataset.k_max(),
    };
    out.subject_offsets.push(0);
    for (i, s) in dataset.subjects().iter().enumerate() {
        out.subject_ids.push(s.id);
        let last = s.time();
        for t in 1..=last {
            out.subject_of_row.push(i);
            out.t_star.push(t);
            out.y.push((t == last && s.event()) as u8);
            out.x.extend_from_slice(&s.x);
            out.z.extend_from_slice(&s.z);
        }
        out.subject_offsets.push(out.t_star.len());
    }
    out
}
