//! Browser bindings: play the learner against the rule-based demonstrator and
//! watch how it replans.

use probe_core::training::probing_reward;
use probe_core::world::GridLayouts;
use probe_core::{ActionCode, Env, SettingMode, Task};
use wasm_bindgen::prelude::*;

/// One episode driven by hand. Plain Rust so it can be tested natively.
#[derive(Debug, Clone)]
pub struct Session {
    env: Env,
    done: bool,
    log: Vec<String>,
}

impl Session {
    pub fn new(task: &str, seed: u64, test: bool) -> Result<Session, String> {
        let task: Task = task.parse()?;
        let mode = if test { SettingMode::Test } else { SettingMode::Train };
        let env = Env::reset(task, mode, seed, &GridLayouts::default()).map_err(|e| e.to_string())?;
        Ok(Session { env, done: false, log: Vec::new() })
    }

    pub fn render(&self) -> String {
        self.env.render()
    }

    pub fn planned(&self) -> String {
        if self.done {
            return "-".into();
        }
        self.env.describe_demo_action(self.env.planned_demo_action())
    }

    pub fn learner_scheduled(&self) -> bool {
        !self.done && self.env.learner_scheduled()
    }

    /// One tick: the demonstrator acts, then the learner takes `first`/`second`
    /// if it is scheduled this tick. Returns the log line.
    pub fn step(&mut self, first: usize, second: usize) -> Result<String, String> {
        if self.done {
            return Err("episode finished".into());
        }
        let space = self.env.task().learner_space();
        if first >= space.heads[0] || space.heads.get(1).is_some_and(|&n| second >= n) {
            return Err(format!("learner action ({first}, {second}) out of range"));
        }
        let t = self.env.step_count();
        let a_d = self.env.planned_demo_action();
        let demo = self.env.describe_demo_action(a_d);
        self.env.execute_demo(a_d);
        let learner = if self.env.learner_scheduled() {
            let code = ActionCode { first, second: if space.heads.len() > 1 { second } else { 0 } };
            self.env.execute_learner(code);
            self.env.describe_learner_action(code)
        } else {
            "-".into()
        };
        self.done = self.env.end_tick();
        let mut line = format!("t={t} demonstrator {demo}, learner {learner}");
        if self.done {
            line.push_str(if self.env.goal_reached() { " | goal reached" } else { " | time limit" });
        }
        self.log.push(line.clone());
        Ok(line)
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn goal_reached(&self) -> bool {
        self.env.goal_reached()
    }

    pub fn log(&self) -> &[String] {
        &self.log
    }
}

/// Parse comma- or space-separated numbers.
pub fn parse_vector(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: '{s}'")))
        .collect()
}

/// Probing reward between two typed mind vectors.
pub fn reward_of(prev: &str, cur: &str) -> Result<f64, String> {
    probing_reward(&parse_vector(prev)?, &parse_vector(cur)?).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub struct Demo {
    inner: Session,
}

#[wasm_bindgen]
impl Demo {
    #[wasm_bindgen(constructor)]
    pub fn new(task: &str, seed: u32, test: bool) -> Result<Demo, JsValue> {
        Session::new(task, seed as u64, test).map(|inner| Demo { inner }).map_err(|e| JsValue::from_str(&e))
    }

    pub fn render(&self) -> String {
        self.inner.render()
    }

    pub fn planned(&self) -> String {
        self.inner.planned()
    }

    #[wasm_bindgen(js_name = learnerScheduled)]
    pub fn learner_scheduled(&self) -> bool {
        self.inner.learner_scheduled()
    }

    pub fn step(&mut self, first: u32, second: u32) -> Result<String, JsValue> {
        self.inner.step(first as usize, second as usize).map_err(|e| JsValue::from_str(&e))
    }

    pub fn done(&self) -> bool {
        self.inner.done()
    }

    #[wasm_bindgen(js_name = goalReached)]
    pub fn goal_reached(&self) -> bool {
        self.inner.goal_reached()
    }
}

#[wasm_bindgen(js_name = probingReward)]
pub fn probing_reward_js(prev: &str, cur: &str) -> Result<f64, JsValue> {
    reward_of(prev, cur).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn passing_session_reaches_goal_with_idle_learner() {
        let mut s = Session::new("passing", 0, false).unwrap();
        assert_eq!(s.planned(), s.env.describe_demo_action(s.env.planned_demo_action()));
        let stop = 6;
        while !s.done() {
            s.step(stop, 0).unwrap();
        }
        assert!(s.goal_reached());
        assert_eq!(s.log().len(), 13);
        assert!(s.step(0, 0).is_err());
    }

    #[test]
    fn sorting_session_takes_flips_only_when_scheduled() {
        let mut s = Session::new("sorting", 0, false).unwrap();
        let mut flips = 0;
        for _ in 0..10 {
            let scheduled = {
                let mut probe = s.env.clone();
                probe.execute_demo(probe.planned_demo_action());
                probe.learner_scheduled()
            };
            let line = s.step(0, 3).unwrap();
            flips += usize::from(line.contains("flip"));
            assert_eq!(line.contains("flip"), scheduled);
        }
        assert_eq!(flips, 2);
    }

    #[test]
    fn out_of_range_actions_are_rejected() {
        let mut s = Session::new("maze", 1, true).unwrap();
        assert!(s.step(7, 0).is_err());
        assert!(Session::new("chess", 0, false).is_err());
    }

    #[test]
    fn reward_parsing() {
        assert_eq!(reward_of("0, 0", "3 4").unwrap(), 25.0);
        assert!(reward_of("1", "1,2").is_err());
        assert!(reward_of("a", "1").is_err());
    }
}
