use std::path::Path;

use depmax_core::drn::EpochMetrics;

use crate::csvio::{fmt_f64, write_text};
use crate::error::Result;

pub const HEADER: &str =
    "epoch,lr,wd,lambda_eff,beta_eff,ce,cons,dep,total,train_acc,val_acc,val_macro_f1";

/// Per-epoch training history as CSV text.
pub fn to_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for m in history {
        let l = &m.loss;
        let fields = [
            l.lr,
            l.wd,
            l.lambda_eff,
            l.beta_eff,
            l.ce,
            l.cons,
            l.dep,
            l.total,
            m.train_acc,
            m.val_acc,
            m.val_macro_f1,
        ];
        out.push_str(&m.epoch.to_string());
        for v in fields {
            out.push(',');
            out.push_str(&fmt_f64(v));
        }
        out.push('\n');
    }
    out
}

pub fn write(path: &Path, history: &[EpochMetrics]) -> Result<()> {
    write_text(path, &to_csv(history))
}
