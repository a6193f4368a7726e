use std::io::{Read, Write};
use std::path::Path;

use super::closed_loop::TickRecord;
use crate::error::{Error, Result};
use crate::model::NUM_LEGS;

/// One simulation step of a closed-loop run.
///
/// Attitude, rates and accelerations are body-frame; position and the
/// external force are inertial. The QP diagnostics belong to the control tick
/// that produced the step's command and repeat across the steps of a tick.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub position: [f64; 3],
    /// Roll, pitch, yaw (rad).
    pub euler: [f64; 3],
    pub omega: [f64; 3],
    pub omega_dot: [f64; 3],
    pub contact: [bool; NUM_LEGS],
    /// Ground reaction forces, inertial frame (N).
    pub grf: [[f64; 3]; NUM_LEGS],
    /// Commanded propeller speeds.
    pub thruster_speeds: [f64; NUM_LEGS],
    /// Hip roll, hip pitch, knee per leg (rad).
    pub joints: [[f64; 3]; NUM_LEGS],
    pub external_force: [f64; 3],
    /// Thrust-only angular acceleration during the step.
    pub nominal_omega_dot: [f64; 3],
    /// Contact residual the MPC used for this step's command.
    pub residual: [f64; 3],
    pub qp_iterations: usize,
    pub qp_kkt: f64,
    pub qp_cost: f64,
    pub qp_converged: bool,
}

const XYZ: [&str; 3] = ["x", "y", "z"];

/// Column names in file order.
pub fn log_columns() -> Vec<String> {
    let mut c = vec!["t".to_string()];
    let vec3 = |c: &mut Vec<String>, name: &str| c.extend(XYZ.iter().map(|a| format!("{name}_{a}")));
    vec3(&mut c, "pos");
    c.extend(["roll", "pitch", "yaw"].map(String::from));
    vec3(&mut c, "omega");
    vec3(&mut c, "omega_dot");
    c.extend((0..NUM_LEGS).map(|i| format!("contact{i}")));
    for i in 0..NUM_LEGS {
        vec3(&mut c, &format!("grf{i}"));
    }
    c.extend((0..NUM_LEGS).map(|i| format!("speed{i}")));
    for i in 0..NUM_LEGS {
        c.extend(["hip_roll", "hip_pitch", "knee"].map(|j| format!("q{i}_{j}")));
    }
    vec3(&mut c, "f_ext");
    vec3(&mut c, "nominal_omega_dot");
    vec3(&mut c, "residual");
    c.extend(["qp_iterations", "qp_kkt", "qp_cost", "qp_converged"].map(String::from));
    c
}

impl LogRow {
    /// Rows for every integration step of a tick.
    pub fn from_tick(tick: &TickRecord) -> Vec<LogRow> {
        tick.steps
            .iter()
            .map(|s| {
                let e = s.state.euler();
                LogRow {
                    t: s.t,
                    position: s.state.position.into(),
                    euler: [e.x, e.y, e.z],
                    omega: s.state.omega.into(),
                    omega_dot: s.omega_dot.into(),
                    contact: s.contact.in_contact,
                    grf: s.contact.force.map(Into::into),
                    thruster_speeds: s.command.v,
                    joints: s.joints.map(|q| [q[0], q[1], q[2]]),
                    external_force: s.external_force.into(),
                    nominal_omega_dot: s.nominal_omega_dot.into(),
                    residual: tick.mpc.residual.into(),
                    qp_iterations: tick.mpc.iterations,
                    qp_kkt: tick.mpc.kkt_residual,
                    qp_cost: tick.mpc.cost,
                    qp_converged: tick.mpc.converged,
                }
            })
            .collect()
    }

    fn fields(&self) -> Vec<String> {
        let mut f = Vec::with_capacity(72);
        // Display prints the shortest string that parses back to the same f64.
        let mut nums = |v: &[f64]| f.extend(v.iter().map(f64::to_string));
        nums(&[self.t]);
        nums(&self.position);
        nums(&self.euler);
        nums(&self.omega);
        nums(&self.omega_dot);
        let contact: Vec<f64> = self.contact.iter().map(|&c| f64::from(u8::from(c))).collect();
        nums(&contact);
        nums(self.grf.as_flattened());
        nums(&self.thruster_speeds);
        nums(self.joints.as_flattened());
        nums(&self.external_force);
        nums(&self.nominal_omega_dot);
        nums(&self.residual);
        f.push(self.qp_iterations.to_string());
        f.push(self.qp_kkt.to_string());
        f.push(self.qp_cost.to_string());
        f.push(u8::from(self.qp_converged).to_string());
        f
    }
}

/// Streams rows to CSV with a fixed header.
pub struct LogWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> LogWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(log_columns())?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &LogRow) -> Result<()> {
        self.inner.write_record(row.fields())?;
        Ok(())
    }

    pub fn finish(self) -> Result<W> {
        self.inner.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

pub fn write_log(rows: &[LogRow], path: &Path) -> Result<()> {
    let mut w = LogWriter::new(std::io::BufWriter::new(std::fs::File::create(path)?))?;
    for r in rows {
        w.write(r)?;
    }
    w.finish()?.flush()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    parse_log(std::fs::File::open(path)?)
}

/// Parse a trajectory log. A header lacking any expected column is rejected
/// with every missing name listed.
pub fn parse_log<R: Read>(input: R) -> Result<Vec<LogRow>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    let cols = log_columns();
    let mut index = Vec::with_capacity(cols.len());
    let mut missing = Vec::new();
    for c in &cols {
        match header.iter().position(|h| h == c) {
            Some(k) => index.push(k),
            None => missing.push(c.as_str()),
        }
    }
    if !missing.is_empty() {
        return Err(Error::Log(format!("trajectory log is missing columns: {}", missing.join(", "))));
    }
    let mut rows = Vec::new();
    let mut vals = vec![0.0; cols.len()];
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        for (j, v) in vals.iter_mut().enumerate() {
            let field = rec.get(index[j]).unwrap_or("");
            *v = field
                .parse()
                .map_err(|_| Error::Log(format!("line {line}: column {}: cannot parse {field:?}", cols[j])))?;
        }
        rows.push(row_from_values(&vals));
    }
    Ok(rows)
}

fn row_from_values(v: &[f64]) -> LogRow {
    let mut k = 0;
    let mut next = || {
        k += 1;
        v[k - 1]
    };
    let t = next();
    let a3 = |n: &mut dyn FnMut() -> f64| [n(), n(), n()];
    let position = a3(&mut next);
    let euler = a3(&mut next);
    let omega = a3(&mut next);
    let omega_dot = a3(&mut next);
    let contact = std::array::from_fn(|_| next() != 0.0);
    let grf = std::array::from_fn(|_| a3(&mut next));
    let thruster_speeds = std::array::from_fn(|_| next());
    let joints = std::array::from_fn(|_| a3(&mut next));
    let external_force = a3(&mut next);
    let nominal_omega_dot = a3(&mut next);
    let residual = a3(&mut next);
    LogRow {
        t,
        position,
        euler,
        omega,
        omega_dot,
        contact,
        grf,
        thruster_speeds,
        joints,
        external_force,
        nominal_omega_dot,
        residual,
        qp_iterations: next() as usize,
        qp_kkt: next(),
        qp_cost: next(),
        qp_converged: next() != 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_row(t: f64) -> LogRow {
        LogRow {
            t,
            position: [0.1, -0.2, 0.3],
            euler: [0.01 * t, -0.02, 1.0 / 3.0],
            omega: [1e-17, 2.5, -3.25],
            omega_dot: [4.0, 5.0, 6.0],
            contact: [true, false, false, true],
            grf: [[1.0, 2.0, 30.0], [0.0; 3], [0.0; 3], [-1.0, 0.5, 29.0]],
            thruster_speeds: [10.0, 11.0, 12.0, 13.0],
            joints: [[0.0, -0.8, 1.6]; NUM_LEGS],
            external_force: [0.0, 15.0, 0.0],
            nominal_omega_dot: [0.1, 0.2, 0.3],
            residual: [-0.1, 0.0, 0.7],
            qp_iterations: 7,
            qp_kkt: 1.5e-9,
            qp_cost: 12.25,
            qp_converged: true,
        }
    }

    #[test]
    fn header_and_rows_have_matching_width() {
        assert_eq!(sample_row(0.0).fields().len(), log_columns().len());
        let cols = log_columns();
        let unique: std::collections::BTreeSet<_> = cols.iter().collect();
        assert_eq!(unique.len(), cols.len());
    }

    #[test]
    fn round_trip_is_exact() {
        let rows: Vec<_> = (0..5).map(|k| sample_row(k as f64 * 0.001 + 0.1)).collect();
        let mut w = LogWriter::new(Vec::new()).unwrap();
        for r in &rows {
            w.write(r).unwrap();
        }
        let bytes = w.finish().unwrap();
        assert_eq!(parse_log(bytes.as_slice()).unwrap(), rows);
    }

    #[test]
    fn truncated_header_names_every_missing_column() {
        let mut cols = log_columns();
        cols.retain(|c| c != "roll" && c != "speed2");
        let text = cols.join(",") + "\n";
        let err = parse_log(text.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("roll") && err.contains("speed2"), "{err}");
    }
}
