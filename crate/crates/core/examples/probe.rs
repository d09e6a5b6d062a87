use crowdscan_core::vehicle::{build_state_space, QuarterCar, VehiclePreset};

fn curve(label: &str, qc: &QuarterCar) {
    let ssm = build_state_space(qc).unwrap();
    let vals: Vec<String> = [4.0, 5.51, 6.5, 7.5, 8.5, 9.5, 10.5, 11.5, 12.34, 15.0, 20.26, 24.99]
        .iter()
        .map(|&f| format!("{f}:{:.4}", ssm.transfer_magnitude(f)))
        .collect();
    println!("{label}: {}", vals.join(" "));
}

fn main() {
    curve("V3 ", &QuarterCar::preset(VehiclePreset::V3));
    curve("V4 ", &QuarterCar::preset(VehiclePreset::V4));
    let v3d = QuarterCar {
        tire_damping_nspm: 8000.0,
        ..QuarterCar::preset(VehiclePreset::V3)
    };
    curve("V3d", &v3d);
    let v4d = QuarterCar {
        tire_damping_nspm: 4500.0,
        ..QuarterCar::preset(VehiclePreset::V4)
    };
    curve("V4d", &v4d);
    let sedan = QuarterCar {
        suspension_stiffness_npm: 3.0e4,
        suspension_damping_nspm: 3000.0,
        sprung_mass_kg: 1200.0,
        unsprung_mass_kg: 120.0,
        tire_stiffness_npm: 3.0e5,
        tire_damping_nspm: 6000.0,
    };
    curve("sed", &sedan);
    let compact = QuarterCar {
        suspension_stiffness_npm: 1.5e4,
        suspension_damping_nspm: 1600.0,
        sprung_mass_kg: 750.0,
        unsprung_mass_kg: 75.0,
        tire_stiffness_npm: 2.0e5,
        tire_damping_nspm: 4000.0,
    };
    curve("cmp", &compact);
}
