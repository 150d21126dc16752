use serde::{Deserialize, Serialize};

use super::{shadow_slots, AllocError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FogSpec {
    pub id: String,
    pub fixed_cost: f64,
    pub capacity: u32,
}

/// Validated allocation inputs. `c[i][j]` is device-to-fog cost, `u[j][k]`
/// the shadow update cost from fog `j` to fog `k`; `u[j][j]` is ignored.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllocationInstance {
    pub devices: Vec<String>,
    pub fogs: Vec<FogSpec>,
    pub c: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

/// On-disk form; identical in shape to the validated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub devices: Vec<String>,
    pub fogs: Vec<FogSpec>,
    pub c: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
}

impl AllocationInstance {
    pub fn load(doc: InstanceDoc) -> Result<AllocationInstance, AllocError> {
        let nd = doc.devices.len();
        let nf = doc.fogs.len();
        if nf == 0 {
            return Err(AllocError::MissingEntries("no fogs declared".into()));
        }
        if doc.c.len() != nd {
            return Err(AllocError::MissingEntries(format!("c has {} rows, expected {nd}", doc.c.len())));
        }
        for (i, row) in doc.c.iter().enumerate() {
            if row.len() != nf {
                return Err(AllocError::MissingEntries(format!(
                    "c row {i} has {} entries, expected {nf}",
                    row.len()
                )));
            }
        }
        if doc.u.len() != nf || doc.u.iter().any(|r| r.len() != nf) {
            return Err(AllocError::MissingEntries(format!("u must be {nf}x{nf}")));
        }
        for (i, row) in doc.c.iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(AllocError::NegativeCost(format!("c row {i}")));
            }
        }
        for (j, row) in doc.u.iter().enumerate() {
            if row.iter().enumerate().any(|(k, v)| k != j && (!(*v >= 0.0) || !v.is_finite())) {
                return Err(AllocError::NegativeCost(format!("u row {j}")));
            }
        }
        for f in &doc.fogs {
            if !(f.fixed_cost >= 0.0) || !f.fixed_cost.is_finite() {
                return Err(AllocError::NegativeCost(format!("fixed cost of {}", f.id)));
            }
            if f.capacity == 0 {
                return Err(AllocError::ZeroCapacity(f.id.clone()));
            }
        }
        let capacity: u64 = doc.fogs.iter().map(|f| f.capacity as u64).sum();
        if capacity < nd as u64 {
            return Err(AllocError::Infeasible { capacity, devices: nd });
        }
        Ok(AllocationInstance {
            devices: doc.devices,
            fogs: doc.fogs,
            c: doc.c,
            u: doc.u,
        })
    }

    pub fn from_json(text: &str) -> Result<AllocationInstance, AllocError> {
        let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| AllocError::Document(e.to_string()))?;
        AllocationInstance::load(doc)
    }

    /// Imports two tables laid out with a header row of fog names and one
    /// labelled row per device (resp. per fog).
    pub fn from_csv(device_fog: &str, inter_fog: &str, fixed_cost: f64, capacity: u32) -> Result<AllocationInstance, AllocError> {
        let (fog_ids, devices, c) = read_table(device_fog)?;
        let (fog_cols, fog_rows, u) = read_table(inter_fog)?;
        if fog_cols != fog_ids || fog_rows != fog_ids {
            return Err(AllocError::Document("fog labels differ between the two tables".into()));
        }
        AllocationInstance::load(InstanceDoc {
            devices,
            fogs: fog_ids.into_iter().map(|id| FogSpec { id, fixed_cost, capacity }).collect(),
            c,
            u,
        })
    }

    pub fn to_doc(&self) -> InstanceDoc {
        InstanceDoc {
            devices: self.devices.clone(),
            fogs: self.fogs.clone(),
            c: self.c.clone(),
            u: self.u.clone(),
        }
    }

    pub fn fog_index(&self, id: &str) -> Option<usize> {
        self.fogs.iter().position(|f| f.id == id)
    }

    pub fn device_index(&self, id: &str) -> Option<usize> {
        self.devices.iter().position(|d| d == id)
    }

    /// Fog indices `k != j` sorted by `u[j][k]`, ties by index.
    pub fn shadow_order(&self, j: usize) -> Vec<usize> {
        let mut ks: Vec<usize> = (0..self.fogs.len()).filter(|&k| k != j).collect();
        ks.sort_by(|&a, &b| self.u[j][a].total_cmp(&self.u[j][b]).then(a.cmp(&b)));
        ks
    }

    pub fn order_by_update_cost(&self, j: usize, mut ks: Vec<usize>) -> Vec<usize> {
        ks.sort_by(|&a, &b| self.u[j][a].total_cmp(&self.u[j][b]).then(a.cmp(&b)));
        ks
    }

    /// The shadow hosts an active fog `j` takes.
    pub fn cheapest_shadows(&self, j: usize) -> Vec<usize> {
        let mut ks: Vec<usize> = self.shadow_order(j).into_iter().take(shadow_slots(self.fogs.len())).collect();
        ks.sort_unstable();
        ks
    }

    pub fn shadow_cost(&self, j: usize) -> f64 {
        self.cheapest_shadows(j).iter().map(|&k| self.u[j][k]).sum()
    }

    /// Multiplies every cost by `factor`.
    pub fn scaled(&self, factor: f64) -> AllocationInstance {
        let mut out = self.clone();
        for row in &mut out.c {
            for v in row {
                *v *= factor;
            }
        }
        for row in &mut out.u {
            for v in row {
                *v *= factor;
            }
        }
        for f in &mut out.fogs {
            f.fixed_cost *= factor;
        }
        out
    }
}

type Table = (Vec<String>, Vec<String>, Vec<Vec<f64>>);

fn read_table(text: &str) -> Result<Table, AllocError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| AllocError::Document(e.to_string()))?.clone();
    let cols: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut labels = Vec::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| AllocError::Document(e.to_string()))?;
        let mut it = rec.iter();
        labels.push(it.next().unwrap_or_default().to_string());
        let row = it
            .map(|cell| {
                cell.parse::<f64>()
                    .map_err(|_| AllocError::Document(format!("not a number: {cell:?}")))
            })
            .collect::<Result<Vec<f64>, _>>()?;
        rows.push(row);
    }
    Ok((cols, labels, rows))
}
