// RGB LED fader. A timer interrupt counts ticks, a button interrupt
// selects the colour program, and the main loop ramps three PWM duties.

const uint8 STEPS = 8;
const uint8 NCOLORS = 4;
uint8 TOIE0 @ 0x6E.0;
uint8 INT0_EN @ 0x3D.0;
uint8 PIND @ 0x29;
uint8 ADCH @ 0x79;
uint8 OCR0A @ 0x47;
uint8 OCR0B @ 0x48;
uint8 OCR2A @ 0xB3;
uint8 red_lut[NCOLORS];
uint8 green_lut[NCOLORS];
uint8 blue_lut[NCOLORS];
volatile uint16 ticks;
volatile uint8 color;
volatile uint8 presses;

uint8 duty[3];
uint8 level;
ISR(TIMER0_OVF_vect) {
    ticks = ticks + 1;
}

ISR(INT0_vect) {
    uint8 pins = PIND;
    if (pins & 4) {
        return;
    }
    presses = presses + 1;
    if (color + 1 < NCOLORS) {
        color = color + 1;
    } else {
        color = 0;
    }
}

uint8 scale(uint8 value, uint8 step) {
    uint16 v = value;
    v = v * step;
    return v / STEPS;
}

void load_tables() {
    red_lut[0] = 255;   green_lut[0] = 0;   blue_lut[0] = 0;
    red_lut[1] = 0;     green_lut[1] = 255; blue_lut[1] = 0;
    red_lut[2] = 0;     green_lut[2] = 0;   blue_lut[2] = 255;
    red_lut[3] = 128;   green_lut[3] = 128; blue_lut[3] = 128;
}

void apply(uint8 c, uint8 step) {
    duty[0] = scale(red_lut[c], step);
    duty[1] = scale(green_lut[c], step);
    duty[2] = scale(blue_lut[c], step);
    OCR0A = duty[0];
    OCR0B = duty[1];
    OCR2A = duty[2];
}

uint8 brightness() {
    uint8 a = ADCH;
    if (a < 16) {
        return 1;
    }
    return a / 32 + 1;
}

void main() {
    uint16 now;
    uint16 last = 0;
    uint8 step = 0;
    uint8 c;
    load_tables();
    TOIE0 = 1;
    INT0_EN = 1;
    while (1) {
        now = ticks;
        if (now - last < 4) {
            continue;
        }
        last = now;
        level = brightness();
        c = color;
        if (step < STEPS) {
            step = step + 1;
        } else {
            step = level;
        }
        if (step > STEPS) {
            step = STEPS;
        }
        apply(c, step);
    }
}
