// Two-way intersection controller. The timer interrupt counts down the
// current phase; a push button requests the pedestrian phase.

const uint8 NPHASES = 4;

uint8 TOIE0 @ 0x6E.0;
uint8 INT0_EN @ 0x3D.0;
uint8 PORTB @ 0x25;
uint8 PORTC @ 0x28;

uint8 lights_ns[NPHASES];
uint8 lights_ew[NPHASES];
uint8 durations[NPHASES];

volatile uint8 remaining;
volatile uint8 expired;
volatile uint8 request;

ISR(TIMER0_OVF_vect) {
    if (remaining > 0) {
        remaining = remaining - 1;
        if (remaining == 0) {
            expired = 1;
        }
    }
}

ISR(INT0_vect) {
    request = 1;
}

void setup() {
    lights_ns[0] = 1; lights_ew[0] = 4; durations[0] = 30;
    lights_ns[1] = 2; lights_ew[1] = 4; durations[1] = 5;
    lights_ns[2] = 4; lights_ew[2] = 1; durations[2] = 30;
    lights_ns[3] = 4; lights_ew[3] = 2; durations[3] = 5;
}

void show(uint8 p) {
    PORTB = lights_ns[p];
    PORTC = lights_ew[p];
}

void main() {
    uint8 phase = 0;
    uint8 done;
    uint8 walk;
    setup();
    show(phase);
    cli();
    remaining = durations[phase];
    expired = 0;
    sei();
    TOIE0 = 1;
    INT0_EN = 1;
    while (1) {
        cli();
        done = expired;
        walk = request;
        if (done) {
            expired = 0;
            request = 0;
            phase = (phase + 1) % NPHASES;
            remaining = durations[phase];
            if (walk) remaining = remaining + 10;
        }
        sei();
        show(phase);
    }
}
