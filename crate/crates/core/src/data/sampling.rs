use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{Label, Manifest};
use crate::error::{Error, Result};

/// One leave-one-site-out fold, as indices into the manifest records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub test_site: String,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// One fold per site, in site order: that site's records are the test set
/// and every other record is training data.
pub fn loso_split(manifest: &Manifest) -> Result<Vec<Fold>> {
    if manifest.sites().len() < 2 {
        return Err(Error::Split(format!(
            "leave-one-site-out needs at least 2 sites, found {}",
            manifest.sites().len()
        )));
    }
    Ok(manifest
        .sites()
        .iter()
        .map(|site| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..manifest.len()).partition(|&i| &manifest.records()[i].site == site);
            Fold {
                test_site: site.clone(),
                train,
                test,
            }
        })
        .collect())
}

/// Endless shuffled draw from one class: each pass is a fresh permutation.
struct Cycle {
    pool: Vec<usize>,
    order: Vec<usize>,
    pos: usize,
}

impl Cycle {
    fn new<R: Rng + ?Sized>(pool: Vec<usize>, rng: &mut R) -> Self {
        let mut order = pool.clone();
        order.shuffle(rng);
        Cycle { pool, order, pos: 0 }
    }

    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> usize {
        if self.pos == self.order.len() {
            self.order.clone_from(&self.pool);
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

/// Class-balanced mini-batches for one epoch, as indices into `labels`.
///
/// Every batch holds `batch_size / 2` records of each class. The larger
/// class is drawn without replacement and the epoch ends when it cannot
/// fill another half batch; the smaller class is cycled through fresh
/// permutations. When the larger class has fewer than `batch_size / 2`
/// records, a single batch is emitted and both classes are cycled. Within
/// a batch, ADHD records precede HC records.
pub fn balanced_batches<R: Rng + ?Sized>(labels: &[Label], batch_size: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size % 2 != 0 {
        return Err(Error::ExperimentConfig(format!(
            "batch size must be even and positive, got {batch_size}"
        )));
    }
    let adhd: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Adhd).collect();
    let hc: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == Label::Hc).collect();
    if adhd.is_empty() || hc.is_empty() {
        return Err(Error::Sampling(format!(
            "both classes are required, got {} ADHD and {} HC",
            adhd.len(),
            hc.len()
        )));
    }
    let half = batch_size / 2;
    let adhd_major = adhd.len() >= hc.len();
    let (major, minor) = if adhd_major { (adhd, hc) } else { (hc, adhd) };
    let n_batches = (major.len() / half).max(1);
    let mut major = Cycle::new(major, rng);
    let mut minor = Cycle::new(minor, rng);
    let mut out = Vec::with_capacity(n_batches);
    for _ in 0..n_batches {
        let a: Vec<usize> = (0..half).map(|_| major.next(rng)).collect();
        let b: Vec<usize> = (0..half).map(|_| minor.next(rng)).collect();
        let (first, second) = if adhd_major { (a, b) } else { (b, a) };
        out.push(first.into_iter().chain(second).collect());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(adhd: usize, hc: usize) -> Vec<Label> {
        let mut v = vec![Label::Adhd; adhd];
        v.extend(vec![Label::Hc; hc]);
        v
    }

    #[test]
    fn exact_balance_on_table_totals() {
        let l = labels(352, 429);
        let batches = balanced_batches(&l, 32, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(batches.len(), 429 / 16);
        for b in &batches {
            assert_eq!(b.len(), 32);
            assert_eq!(b.iter().filter(|&&i| l[i] == Label::Adhd).count(), 16);
        }
    }

    #[test]
    fn sixteen_each_is_one_full_batch() {
        let l = labels(16, 16);
        let batches = balanced_batches(&l, 32, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(batches.len(), 1);
        let mut all = batches[0].clone();
        all.sort_unstable();
        assert_eq!(all, (0..32).collect::<Vec<_>>());
    }

    #[test]
    fn majority_records_at_most_once_per_epoch() {
        let l = labels(40, 103);
        let batches = balanced_batches(&l, 32, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let mut seen = vec![0usize; l.len()];
        for b in &batches {
            for &i in b {
                seen[i] += 1;
            }
        }
        assert!(seen[40..].iter().all(|&c| c <= 1));
        // minority cycles, so every minority record appears
        assert!(seen[..40].iter().all(|&c| c >= 1));
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(balanced_batches(&labels(5, 0), 4, &mut rng), Err(Error::Sampling(_))));
        assert!(matches!(balanced_batches(&labels(5, 5), 5, &mut rng), Err(Error::ExperimentConfig(_))));
    }

    #[test]
    fn deterministic_given_seed() {
        let l = labels(30, 50);
        let a = balanced_batches(&l, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = balanced_batches(&l, 8, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }
}
