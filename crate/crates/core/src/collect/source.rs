use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use crossterm::event::{self, Event, KeyCode, KeyEvent, KeyEventKind, KeyModifiers};
use crossterm::terminal;

use crate::datastore::Source;
use crate::env::rng::streams;
use crate::env::{CounterRng, EnvSpec, State};

use super::command::{Grip, TeleopCommand};
use super::expert::scripted_expert;

/// Where operator commands come from.
///
/// `poll` never blocks; `None` means "no new intent", which the session turns
/// into a hold action.
pub trait CommandSource {
    /// Called once per episode, before the first poll.
    fn begin(&mut self, _spec: &EnvSpec, _seed: u64) {}

    fn poll(&mut self, state: &State, spec: &EnvSpec) -> Option<TeleopCommand>;

    /// Whether the operator ended the session.
    fn finished(&self) -> bool {
        false
    }

    fn end(&mut self) {}

    fn kind(&self) -> Source;

    /// Whether the session should run at the environment's control rate
    /// rather than as fast as possible.
    fn realtime(&self) -> bool {
        false
    }
}

/// The scripted expert as a command source.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSource {
    rng: Option<CounterRng>,
}

impl ScriptedSource {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CommandSource for ScriptedSource {
    fn begin(&mut self, _spec: &EnvSpec, seed: u64) {
        self.rng = Some(CounterRng::new(seed, streams::EXPERT));
    }

    fn poll(&mut self, state: &State, spec: &EnvSpec) -> Option<TeleopCommand> {
        let rng = self.rng.get_or_insert_with(|| CounterRng::new(0, streams::EXPERT));
        Some(scripted_expert(state.task, state, spec, rng))
    }

    fn kind(&self) -> Source {
        Source::Scripted
    }
}

/// Single-slot handoff where a newer value replaces an unread older one.
#[derive(Debug)]
pub struct LatestCell<T> {
    slot: Mutex<Option<T>>,
}

impl<T> Default for LatestCell<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> LatestCell<T> {
    pub fn new() -> Self {
        Self { slot: Mutex::new(None) }
    }

    pub fn put(&self, value: T) {
        *self.slot.lock().unwrap_or_else(|e| e.into_inner()) = Some(value);
    }

    pub fn take(&self) -> Option<T> {
        self.slot.lock().unwrap_or_else(|e| e.into_inner()).take()
    }
}

/// Commands pushed from another thread, e.g. a websocket connection.
#[derive(Debug, Clone, Default)]
pub struct WebSource {
    pub cell: Arc<LatestCell<TeleopCommand>>,
    pub ended: Arc<AtomicBool>,
}

impl WebSource {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CommandSource for WebSource {
    fn poll(&mut self, _state: &State, _spec: &EnvSpec) -> Option<TeleopCommand> {
        self.cell.take()
    }

    fn finished(&self) -> bool {
        self.ended.load(Ordering::Acquire)
    }

    fn kind(&self) -> Source {
        Source::Web
    }

    fn realtime(&self) -> bool {
        true
    }
}

/// End-effector step per key press.
pub const KEY_STEP: f64 = 0.04;

/// Keyboard state carried between presses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyMapper {
    closed: bool,
    arm: usize,
    arms: usize,
    quit: bool,
}

impl KeyMapper {
    pub fn new(arms: usize) -> Self {
        Self { closed: false, arm: 0, arms: arms.max(1), quit: false }
    }

    pub fn quit(&self) -> bool {
        self.quit
    }

    /// Folds one key press into `cmd`: arrows move the end-effector, space
    /// toggles the gripper, WASD drives the base, Tab cycles arms and q or Esc
    /// ends the session.
    pub fn apply(&mut self, key: KeyEvent, cmd: &mut TeleopCommand) {
        if key.kind == KeyEventKind::Release {
            return;
        }
        let mut base = |dx: f64, dy: f64| {
            let b = cmd.base_delta.get_or_insert([0.0, 0.0]);
            b[0] += dx;
            b[1] += dy;
        };
        match key.code {
            KeyCode::Left => cmd.ee_delta[0] -= KEY_STEP,
            KeyCode::Right => cmd.ee_delta[0] += KEY_STEP,
            KeyCode::Up => cmd.ee_delta[1] += KEY_STEP,
            KeyCode::Down => cmd.ee_delta[1] -= KEY_STEP,
            KeyCode::Char(' ') => {
                self.closed = !self.closed;
                cmd.grip = if self.closed { Grip::Close } else { Grip::Open };
            }
            KeyCode::Char('w') => base(0.0, KEY_STEP),
            KeyCode::Char('s') => base(0.0, -KEY_STEP),
            KeyCode::Char('a') => base(-KEY_STEP, 0.0),
            KeyCode::Char('d') => base(KEY_STEP, 0.0),
            KeyCode::Tab => self.arm = (self.arm + 1) % self.arms,
            KeyCode::Char('q') | KeyCode::Esc => self.quit = true,
            KeyCode::Char('c') if key.modifiers.contains(KeyModifiers::CONTROL) => self.quit = true,
            _ => {}
        }
        cmd.arm_select = self.arm;
    }
}

/// Terminal keyboard teleoperation in raw mode.
#[derive(Debug, Default)]
pub struct KeyboardSource {
    mapper: KeyMapper,
    raw: bool,
}

impl KeyboardSource {
    pub fn new() -> Self {
        Self::default()
    }
}

impl CommandSource for KeyboardSource {
    fn begin(&mut self, spec: &EnvSpec, _seed: u64) {
        let quit = self.mapper.quit;
        self.mapper = KeyMapper { quit, ..KeyMapper::new(spec.arm_count()) };
        if !self.raw {
            self.raw = terminal::enable_raw_mode().is_ok();
        }
    }

    fn poll(&mut self, _state: &State, _spec: &EnvSpec) -> Option<TeleopCommand> {
        let mut cmd = TeleopCommand { arm_select: self.mapper.arm, ..TeleopCommand::hold() };
        let mut any = false;
        while event::poll(Duration::ZERO).unwrap_or(false) {
            if let Ok(Event::Key(key)) = event::read() {
                self.mapper.apply(key, &mut cmd);
                any = true;
            }
        }
        any.then_some(cmd)
    }

    fn finished(&self) -> bool {
        self.mapper.quit
    }

    fn end(&mut self) {
        if self.raw {
            let _ = terminal::disable_raw_mode();
            self.raw = false;
        }
    }

    fn kind(&self) -> Source {
        Source::Keyboard
    }

    fn realtime(&self) -> bool {
        true
    }
}

impl Drop for KeyboardSource {
    fn drop(&mut self) {
        self.end();
    }
}
