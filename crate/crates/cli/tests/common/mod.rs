use ekhom_cli::{parse_config_str, RunConfig};

/// Two realizations on a 64^2 grid with one eps level.
pub fn smoke(dir: &std::path::Path) -> RunConfig {
    let text = format!(
        r#"
surface_charge = {{ kind = "constant", value = 0.2 }}

[electrolyte]
z = [-1, 1]
n_c = [0.5, 0.5]
Pe = [1.0, 1.0]
beta = 1.0
N_sigma = 1.0

[geometry]
generator = "bernoulli"
L = 2
params = {{ p_open = 0.5, gap_fraction = 0.125 }}
constraints = {{ delta_min = 0.125 }}

[grid]
n = 64

[macro]
m = 32

[epsilon]
eps_list = [0.5]
m_list = [128]

[ensemble]
M = 2

[output]
dir = "{}"
"#,
        dir.display()
    );
    parse_config_str(&text).unwrap()
}
