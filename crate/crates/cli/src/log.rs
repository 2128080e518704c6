//! Line-delimited JSON logs on stderr.

use serde_json::{json, Map, Value};

pub fn emit(level: &str, stage: &str, msg: &str, fields: Value) {
    let mut obj = Map::new();
    obj.insert("level".into(), json!(level));
    obj.insert("stage".into(), json!(stage));
    obj.insert("msg".into(), json!(msg));
    if let Value::Object(extra) = fields {
        obj.extend(extra);
    }
    eprintln!("{}", Value::Object(obj));
}

pub fn info(stage: &str, msg: &str, fields: Value) {
    emit("info", stage, msg, fields);
}

pub fn warn(stage: &str, msg: &str, fields: Value) {
    emit("warn", stage, msg, fields);
}
