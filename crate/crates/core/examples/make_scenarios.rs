//! Writes the bundled command-line scenarios.
//!
//! ```text
//! cargo run --example make_scenarios -- <dir>
//! ```

use std::f64::consts::PI;
use std::path::PathBuf;

use devpanel::io::{write_control_net, write_mesh, write_text};
use devpanel::synthetic::{bumped_cylinder, fit_bspline, torus, triangle_mesh};

const DEVELOP_CFG: &str = "\
# Cylinder sector with a 1% bump, 7x13 control net, thinned with strip
# patches running along the rulings.
surface = bumped_cylinder_ctrl.obj
out = out/develop
samples = 30 60
patch_size = 5 60
overlap = 2 1
closeness_samples = 30 60
tessellation = 30 60

[weights]
w_d = 100
w_c = 0.01
w_f = 0.1

[solver]
iterations = 20
record_time = false
";

const RULINGS_CFG: &str = "\
# Rulings of the developed cylinder; run develop.cfg first.
surface = out/develop/surface_ctrl.obj
out = out/rulings
samples = 30 60
patch_size = 5 60
overlap = 2 1
";

const PANELIZE_CFG: &str = "\
# Torus sector (R = 8, r = 2) covered by five cylinder panels.
reference = torus_sector.obj
out = out/panelize
panels = 5 1
tessellation = 61 21

[weights]
w_d = 100
w_r = 1
w_c = 1
w_f = 0.1

[solver]
iterations = 10
record_time = false

[panels]
default = cylinder
";

fn main() -> devpanel::Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "scenarios".into()));

    let cyl = dir.join("cylinder");
    let model = fit_bspline(7, 13, bumped_cylinder(1.0, PI / 2.0, 2.0, 0.01))?;
    write_control_net(&model, &cyl.join("bumped_cylinder_ctrl.obj"))?;
    write_text(&cyl.join("develop.cfg"), DEVELOP_CFG)?;
    write_text(&cyl.join("rulings.cfg"), RULINGS_CFG)?;

    let tor = dir.join("torus");
    let (verts, tris) = triangle_mesh(&torus(8.0, 2.0, [0.0, 0.5], [-0.7, 0.7]), 80, 40);
    write_mesh(&tor.join("torus_sector.obj"), &verts, &[], &tris)?;
    write_text(&tor.join("panelize.cfg"), PANELIZE_CFG)?;

    println!("scenarios written to {}", dir.display());
    Ok(())
}
