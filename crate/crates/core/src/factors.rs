//! Dense discrete factors.
//!
//! A factor stores its variables in ascending id order and a row-major table in
//! which the last variable varies fastest.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::Scalar;

/// Name of a random variable, which doubles as the atom name in nets.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VariableId(Arc<str>);

impl VariableId {
    pub fn new(name: &str) -> Self {
        assert!(!name.is_empty(), "variable names must be nonempty");
        VariableId(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for VariableId {
    fn from(s: &str) -> Self {
        VariableId::new(s)
    }
}

impl fmt::Display for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl serde::Serialize for VariableId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl fmt::Debug for VariableId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Ordered, distinct value labels of a variable.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Domain {
    values: Vec<String>,
}

impl Domain {
    pub fn new<I, T>(values: I) -> Result<Self, FactorError>
    where
        I: IntoIterator<Item = T>,
        T: Into<String>,
    {
        let values: Vec<String> = values.into_iter().map(Into::into).collect();
        if values.is_empty() {
            return Err(FactorError::InvalidDomain("empty domain".into()));
        }
        for (i, v) in values.iter().enumerate() {
            if values[..i].contains(v) {
                return Err(FactorError::InvalidDomain(format!("duplicate value {v:?}")));
            }
        }
        Ok(Domain { values })
    }

    /// The `["t", "f"]` domain.
    pub fn binary() -> Self {
        Domain { values: vec!["t".into(), "f".into()] }
    }

    /// Values `v0 .. v{n-1}`.
    pub fn sized(n: usize) -> Self {
        assert!(n >= 1);
        Domain { values: (0..n).map(|i| format!("v{i}")).collect() }
    }

    pub fn size(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.values.iter().position(|v| v == label)
    }
}

/// Value index per variable.
pub type Assignment = BTreeMap<VariableId, usize>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorError {
    #[error("table length {found} does not match domain product {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("entry {index} is negative or not finite")]
    NegativeEntry { index: usize },
    #[error("variable {0} appears twice")]
    DuplicateVariable(VariableId),
    #[error("variable {0} has different domains in the two factors")]
    DomainMismatch(VariableId),
    #[error("variable {0} is not in scope")]
    UnknownVariable(VariableId),
    #[error("row {row:?} sums to {sum}")]
    RowNotNormalized { row: Vec<(VariableId, usize)>, sum: f64 },
    #[error("value index {index} out of range for {var}")]
    ValueOutOfRange { var: VariableId, index: usize },
    #[error("factor has zero total mass")]
    ZeroMass,
    #[error("invalid domain: {0}")]
    InvalidDomain(String),
}

/// Cells allocated and multiply-adds performed by factor operations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct OpCount {
    pub cells: u64,
    pub mul_adds: u64,
}

impl OpCount {
    pub fn add(&mut self, other: OpCount) {
        self.cells += other.cells;
        self.mul_adds += other.mul_adds;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Factor<S> {
    vars: Vec<VariableId>,
    domains: Vec<Arc<Domain>>,
    table: Vec<S>,
}

fn same_domain(a: &Arc<Domain>, b: &Arc<Domain>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}

/// Stride of each `scope` variable inside a factor over `vars` (0 when absent).
fn strides_in(vars: &[VariableId], sizes: &[usize], scope: &[VariableId]) -> Vec<usize> {
    let mut own = vec![0usize; vars.len()];
    let mut s = 1;
    for i in (0..vars.len()).rev() {
        own[i] = s;
        s *= sizes[i];
    }
    scope
        .iter()
        .map(|v| match vars.binary_search(v) {
            Ok(i) => own[i],
            Err(_) => 0,
        })
        .collect()
}

/// Visits every index of a mixed-radix counter, passing the running offset.
fn odometer(sizes: &[usize], strides: &[usize], mut visit: impl FnMut(usize, usize)) {
    let total: usize = sizes.iter().product();
    let n = sizes.len();
    let mut counter = vec![0usize; n];
    let mut off = 0usize;
    for i in 0..total {
        visit(i, off);
        let mut k = n;
        while k > 0 {
            k -= 1;
            counter[k] += 1;
            off += strides[k];
            if counter[k] < sizes[k] {
                break;
            }
            off -= strides[k] * sizes[k];
            counter[k] = 0;
        }
    }
}

impl<S: Scalar> Factor<S> {
    /// Builds a factor, permuting the table into canonical variable order.
    pub fn new(vars: Vec<VariableId>, domains: Vec<Arc<Domain>>, table: Vec<S>) -> Result<Self, FactorError> {
        assert_eq!(vars.len(), domains.len(), "one domain per variable");
        for (i, v) in vars.iter().enumerate() {
            if vars[..i].contains(v) {
                return Err(FactorError::DuplicateVariable(v.clone()));
            }
        }
        let expected: usize = domains.iter().map(|d| d.size()).product();
        if table.len() != expected {
            return Err(FactorError::LengthMismatch { expected, found: table.len() });
        }
        if let Some(index) = table.iter().position(|x| !x.is_finite() || *x < S::zero()) {
            return Err(FactorError::NegativeEntry { index });
        }
        let mut order: Vec<usize> = (0..vars.len()).collect();
        order.sort_by(|&a, &b| vars[a].cmp(&vars[b]));
        if order.iter().enumerate().all(|(i, &j)| i == j) {
            return Ok(Factor { vars, domains, table });
        }
        let sizes: Vec<usize> = domains.iter().map(|d| d.size()).collect();
        let new_vars: Vec<VariableId> = order.iter().map(|&i| vars[i].clone()).collect();
        let new_domains: Vec<Arc<Domain>> = order.iter().map(|&i| domains[i].clone()).collect();
        let new_sizes: Vec<usize> = order.iter().map(|&i| sizes[i]).collect();
        let mut own = vec![0usize; vars.len()];
        let mut s = 1;
        for i in (0..vars.len()).rev() {
            own[i] = s;
            s *= sizes[i];
        }
        let st: Vec<usize> = order.iter().map(|&i| own[i]).collect();
        let mut out = vec![S::zero(); expected];
        odometer(&new_sizes, &st, |i, off| out[i] = table[off]);
        Ok(Factor { vars: new_vars, domains: new_domains, table: out })
    }

    /// The empty-scope factor `[1]`.
    pub fn unit() -> Self {
        Factor { vars: vec![], domains: vec![], table: vec![S::one()] }
    }

    /// All-ones factor over the given scope.
    pub fn ones(vars: Vec<VariableId>, domains: Vec<Arc<Domain>>) -> Result<Self, FactorError> {
        let n: usize = domains.iter().map(|d| d.size()).product();
        Factor::new(vars, domains, vec![S::one(); n])
    }

    /// 0/1 indicator of `var = index`.
    pub fn indicator(var: VariableId, domain: Arc<Domain>, index: usize) -> Result<Self, FactorError> {
        if index >= domain.size() {
            return Err(FactorError::ValueOutOfRange { var, index });
        }
        let table = (0..domain.size()).map(|i| if i == index { S::one() } else { S::zero() }).collect();
        Factor::new(vec![var], vec![domain], table)
    }

    pub fn vars(&self) -> &[VariableId] {
        &self.vars
    }

    pub fn domains(&self) -> &[Arc<Domain>] {
        &self.domains
    }

    pub fn table(&self) -> &[S] {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn domain_of(&self, v: &VariableId) -> Option<&Arc<Domain>> {
        self.vars.binary_search(v).ok().map(|i| &self.domains[i])
    }

    pub fn contains(&self, v: &VariableId) -> bool {
        self.vars.binary_search(v).is_ok()
    }

    fn sizes(&self) -> Vec<usize> {
        self.domains.iter().map(|d| d.size()).collect()
    }

    /// Converts every entry to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Factor<T> {
        Factor {
            vars: self.vars.clone(),
            domains: self.domains.clone(),
            table: self.table.iter().map(|x| T::from(*x).expect("finite entry")).collect(),
        }
    }

    /// Entry at a full assignment of the factor's variables.
    pub fn value(&self, a: &Assignment) -> Result<S, FactorError> {
        let mut off = 0;
        for (v, d) in self.vars.iter().zip(&self.domains) {
            let i = *a.get(v).ok_or_else(|| FactorError::UnknownVariable(v.clone()))?;
            if i >= d.size() {
                return Err(FactorError::ValueOutOfRange { var: v.clone(), index: i });
            }
            off = off * d.size() + i;
        }
        Ok(self.table[off])
    }

    /// Decodes a table index into per-variable value indices.
    pub fn assignment_at(&self, mut index: usize) -> Vec<(VariableId, usize)> {
        let mut out = vec![];
        for (v, d) in self.vars.iter().zip(&self.domains).rev() {
            out.push((v.clone(), index % d.size()));
            index /= d.size();
        }
        out.reverse();
        out
    }

    pub fn total(&self) -> S {
        self.table.iter().fold(S::zero(), |a, &b| a + b)
    }

    /// Merged scope of several factors, checking shared domains.
    pub fn union_scope<'a, I>(factors: I) -> Result<(Vec<VariableId>, Vec<Arc<Domain>>), FactorError>
    where
        I: IntoIterator<Item = &'a Factor<S>>,
    {
        let mut scope: BTreeMap<VariableId, Arc<Domain>> = BTreeMap::new();
        for f in factors {
            for (v, d) in f.vars.iter().zip(&f.domains) {
                match scope.get(v) {
                    Some(old) if !same_domain(old, d) => return Err(FactorError::DomainMismatch(v.clone())),
                    Some(_) => {}
                    None => {
                        scope.insert(v.clone(), d.clone());
                    }
                }
            }
        }
        Ok(scope.into_iter().unzip())
    }

    /// Product of `factors` laid out over `scope`, which must cover every factor's
    /// variables. Variables of `scope` missing from all factors are broadcast.
    /// Allocates exactly one table.
    pub fn product_over(
        vars: Vec<VariableId>,
        domains: Vec<Arc<Domain>>,
        factors: &[&Factor<S>],
        count: &mut OpCount,
    ) -> Result<Self, FactorError> {
        debug_assert!(vars.windows(2).all(|w| w[0] < w[1]));
        for f in factors {
            for (v, d) in f.vars.iter().zip(&f.domains) {
                match vars.binary_search(v) {
                    Ok(i) if same_domain(&domains[i], d) => {}
                    Ok(_) => return Err(FactorError::DomainMismatch(v.clone())),
                    Err(_) => return Err(FactorError::UnknownVariable(v.clone())),
                }
            }
        }
        let sizes: Vec<usize> = domains.iter().map(|d| d.size()).collect();
        let total: usize = sizes.iter().product();
        let mut table = vec![S::one(); total];
        count.cells += total as u64;
        for f in factors {
            let st = strides_in(&f.vars, &f.sizes(), &vars);
            let src = &f.table;
            odometer(&sizes, &st, |i, off| table[i] = table[i] * src[off]);
            count.mul_adds += total as u64;
        }
        Ok(Factor { vars, domains, table })
    }

    /// Product of all factors over their union scope.
    pub fn multiply_all(factors: &[&Factor<S>], count: &mut OpCount) -> Result<Self, FactorError> {
        let (vars, domains) = Self::union_scope(factors.iter().copied())?;
        Self::product_over(vars, domains, factors, count)
    }

    pub fn multiply(&self, other: &Factor<S>) -> Result<Self, FactorError> {
        Self::multiply_all(&[self, other], &mut OpCount::default())
    }

    /// Sums out every variable not in `keep`; every `keep` variable must be in scope.
    pub fn project_counted(&self, keep: &[VariableId], count: &mut OpCount) -> Result<Self, FactorError> {
        for k in keep {
            if !self.contains(k) {
                return Err(FactorError::UnknownVariable(k.clone()));
            }
        }
        Ok(self.restrict_to(keep, count))
    }

    fn restrict_to(&self, keep: &[VariableId], count: &mut OpCount) -> Self {
        let mut vars = vec![];
        let mut domains = vec![];
        for (v, d) in self.vars.iter().zip(&self.domains) {
            if keep.contains(v) {
                vars.push(v.clone());
                domains.push(d.clone());
            }
        }
        if vars.len() == self.vars.len() {
            count.cells += self.table.len() as u64;
            return self.clone();
        }
        let out_sizes: Vec<usize> = domains.iter().map(|d| d.size()).collect();
        let n: usize = out_sizes.iter().product();
        let st = strides_in(&vars, &out_sizes, &self.vars);
        let mut table = vec![S::zero(); n];
        count.cells += n as u64;
        count.mul_adds += self.table.len() as u64;
        let src = &self.table;
        odometer(&self.sizes(), &st, |i, off| table[off] = table[off] + src[i]);
        Factor { vars, domains, table }
    }

    pub fn project(&self, keep: &[VariableId]) -> Result<Self, FactorError> {
        self.project_counted(keep, &mut OpCount::default())
    }

    /// Projects onto `keep`, broadcasting with ones over `keep` variables that are
    /// not in scope (their domains come from `domains`).
    pub fn project_extend(
        &self,
        keep: &[(VariableId, Arc<Domain>)],
        count: &mut OpCount,
    ) -> Result<Self, FactorError> {
        let present: Vec<VariableId> = keep.iter().filter(|(v, _)| self.contains(v)).map(|(v, _)| v.clone()).collect();
        let p = self.restrict_to(&present, count);
        if present.len() == keep.len() {
            return Ok(p);
        }
        let mut all: Vec<(VariableId, Arc<Domain>)> = keep.to_vec();
        all.sort_by(|a, b| a.0.cmp(&b.0));
        let (vars, domains): (Vec<_>, Vec<_>) = all.into_iter().unzip();
        Self::product_over(vars, domains, &[&p], count)
    }

    pub fn sum_out(&self, x: &VariableId) -> Result<Self, FactorError> {
        if !self.contains(x) {
            return Err(FactorError::UnknownVariable(x.clone()));
        }
        let keep: Vec<VariableId> = self.vars.iter().filter(|v| *v != x).cloned().collect();
        Ok(self.restrict_to(&keep, &mut OpCount::default()))
    }

    /// Checks that every row over the non-child variables sums to one within `tol`.
    pub fn validate_cpt(&self, child: &VariableId, tol: f64) -> Result<(), FactorError> {
        if !self.contains(child) {
            return Err(FactorError::UnknownVariable(child.clone()));
        }
        let parents: Vec<VariableId> = self.vars.iter().filter(|v| *v != child).cloned().collect();
        let sums = self.restrict_to(&parents, &mut OpCount::default());
        for (i, s) in sums.table.iter().enumerate() {
            let s = s.to_f64().unwrap_or(f64::NAN);
            if !((s - 1.0).abs() <= tol) {
                return Err(FactorError::RowNotNormalized { row: sums.assignment_at(i), sum: s });
            }
        }
        Ok(())
    }

    /// Slices the table at the evidence values, dropping the evidenced variables.
    pub fn condition(&self, evidence: &Assignment) -> Result<Self, FactorError> {
        let sizes = self.sizes();
        let mut base = 0usize;
        let mut own = vec![0usize; self.vars.len()];
        let mut s = 1;
        for i in (0..self.vars.len()).rev() {
            own[i] = s;
            s *= sizes[i];
        }
        for (v, &idx) in evidence {
            let i = self.vars.binary_search(v).map_err(|_| FactorError::UnknownVariable(v.clone()))?;
            if idx >= sizes[i] {
                return Err(FactorError::ValueOutOfRange { var: v.clone(), index: idx });
            }
            base += idx * own[i];
        }
        let keep: Vec<usize> = (0..self.vars.len()).filter(|&i| !evidence.contains_key(&self.vars[i])).collect();
        let out_sizes: Vec<usize> = keep.iter().map(|&i| sizes[i]).collect();
        let st: Vec<usize> = keep.iter().map(|&i| own[i]).collect();
        let n: usize = out_sizes.iter().product();
        let mut table = vec![S::zero(); n];
        odometer(&out_sizes, &st, |i, off| table[i] = self.table[base + off]);
        Ok(Factor {
            vars: keep.iter().map(|&i| self.vars[i].clone()).collect(),
            domains: keep.iter().map(|&i| self.domains[i].clone()).collect(),
            table,
        })
    }

    pub fn normalize(&self) -> Result<Self, FactorError> {
        let total = self.total();
        if !(total > S::zero()) {
            return Err(FactorError::ZeroMass);
        }
        Ok(Factor {
            vars: self.vars.clone(),
            domains: self.domains.clone(),
            table: self.table.iter().map(|&x| x / total).collect(),
        })
    }

    /// Same scope and every entry within `tol`.
    pub fn approx_eq(&self, other: &Factor<S>, tol: f64) -> bool {
        self.vars == other.vars
            && self.domains.iter().zip(&other.domains).all(|(a, b)| same_domain(a, b))
            && self.max_abs_diff(other).is_some_and(|d| d <= tol)
    }

    /// Largest entrywise difference, when the scopes agree.
    pub fn max_abs_diff(&self, other: &Factor<S>) -> Option<f64> {
        if self.vars != other.vars || self.table.len() != other.table.len() {
            return None;
        }
        Some(
            self.table
                .iter()
                .zip(&other.table)
                .map(|(a, b)| (*a - *b).abs().to_f64().unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max),
        )
    }
}

/// Free-function form of [`Factor::new`].
pub fn make_factor<S: Scalar>(
    vars: Vec<VariableId>,
    domains: Vec<Arc<Domain>>,
    table: Vec<S>,
) -> Result<Factor<S>, FactorError> {
    Factor::new(vars, domains, table)
}
