//! gnuplot scripts for the CSV outputs.

/// Root-locus scatter of a pole-sweep CSV, axes in units of `omega0`,
/// colour by inductance.
pub fn sweep_script(csv: &str, omega0: f64) -> String {
    format!(
        r#"# Closed-loop poles over plant inductance
set datafile separator ","
w0 = {omega0:?}
set xlabel "Re(s) / omega_0"
set ylabel "Im(s) / omega_0"
set cblabel "L (pu)"
set palette rgb 33,13,10
set grid
set xrange [-4:0.5]
plot for [k=1:7] "{csv}" skip 1 using (column(2*k)/w0):(column(2*k+1)/w0):1 with points pt 7 ps 0.8 lc palette notitle
"#
    )
}

/// Three stacked panels: active power, converter voltage and frequencies.
pub fn scenario_script(csv: &str, title: &str) -> String {
    format!(
        r#"# {title}
set datafile separator ","
set multiplot layout 3,1 title "{title}"
set grid
set xlabel "t (s)"
set ylabel "p (pu)"
plot "{csv}" skip 1 using 1:2 with lines title "p"
set ylabel "V (pu)"
plot "{csv}" skip 1 using 1:3 with lines title "V", "" skip 1 using 1:4 with lines title "V_hat"
set ylabel "f (Hz)"
plot "{csv}" skip 1 using 1:($5/(2*pi)) with lines title "controller", "" skip 1 using 1:($6/(2*pi)) with lines title "grid"
unset multiplot
"#
    )
}
